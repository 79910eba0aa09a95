#pragma once

// Dense complex kernels for small Hermitian problems (dim <= 16).
// Everything here is a pure function; frequencies are in MHz, times in µs,
// so propagators carry the 2π explicitly.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "donorsim/errors.hpp"

namespace donorsim {

template <class S>
using CMatrix = Eigen::Matrix<std::complex<S>, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using CVector = Eigen::Matrix<std::complex<S>, Eigen::Dynamic, 1>;
template <class S>
using RVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using cplx = std::complex<double>;
using cmat = CMatrix<double>;
using cvec = CVector<double>;
using rvec = RVector<double>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double hermitian_tol = 1e-10;
inline constexpr double psd_tol = 1e-10;
inline constexpr int max_dim = 16;

template <class S>
struct EigenSystem {
    RVector<S> values;    // ascending
    CMatrix<S> vectors;   // orthonormal columns
};

template <class Derived>
typename Derived::RealScalar hermiticity_defect(const Eigen::MatrixBase<Derived>& m) {
    if (m.size() == 0) return 0;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

template <class Derived>
auto hermitize(const Eigen::MatrixBase<Derived>& m) {
    using S = typename Derived::RealScalar;
    CMatrix<S> h = (m + m.adjoint()) / S(2);
    return h;
}

template <class Derived>
EigenSystem<typename Derived::RealScalar> hermitian_eig(const Eigen::MatrixBase<Derived>& m) {
    using S = typename Derived::RealScalar;
    if (m.rows() != m.cols()) throw DimensionError("hermitian_eig: matrix is not square");
    if (hermiticity_defect(m) >= S(hermitian_tol))
        throw ContractViolation("hermitian_eig: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMatrix<S>> es(hermitize(m));
    if (es.info() != Eigen::Success) throw ContractViolation("hermitian_eig: solver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

template <class S>
CMatrix<S> reconstruct(const EigenSystem<S>& es) {
    return es.vectors * es.values.template cast<std::complex<S>>().asDiagonal() *
           es.vectors.adjoint();
}

// exp(-i 2π H t) from a precomputed eigensystem of H
template <class S>
CMatrix<S> propagator(const EigenSystem<S>& es, S t) {
    const Eigen::Index n = es.values.size();
    CVector<S> ph(n);
    for (Eigen::Index k = 0; k < n; ++k)
        ph(k) = std::polar(S(1), -S(two_pi) * es.values(k) * t);
    return es.vectors * ph.asDiagonal() * es.vectors.adjoint();
}

template <class Derived>
auto unitary_exp(const Eigen::MatrixBase<Derived>& h, typename Derived::RealScalar t) {
    if (t < 0) throw ContractViolation("unitary_exp: negative duration");
    return propagator(hermitian_eig(h), t);
}

// exp(+i 2π D t) for a real diagonal D given as a vector
template <class S>
CVector<S> diagonal_phase(const RVector<S>& d, S t) {
    CVector<S> out(d.size());
    for (Eigen::Index k = 0; k < d.size(); ++k) out(k) = std::polar(S(1), S(two_pi) * d(k) * t);
    return out;
}

template <class Derived>
auto psd_sqrt(const Eigen::MatrixBase<Derived>& m) {
    using S = typename Derived::RealScalar;
    auto es = hermitian_eig(m);
    if (es.values.size() && es.values.minCoeff() < -S(psd_tol))
        throw NotPsdError("psd_sqrt: matrix has a negative eigenvalue");
    RVector<S> r = es.values.cwiseMax(S(0)).cwiseSqrt();
    CMatrix<S> out = es.vectors * r.template cast<std::complex<S>>().asDiagonal() *
                     es.vectors.adjoint();
    return out;
}

// Euclidean projection onto the probability simplex (sort + waterfill)
template <class S>
RVector<S> simplex_projection(const RVector<S>& v) {
    std::vector<S> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<S>());
    S css = 0, theta = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        const S t = (css - S(1)) / S(i + 1);
        if (u[i] - t > 0) theta = t;
    }
    return (v.array() - theta).cwiseMax(S(0)).matrix();
}

template <class Derived>
auto nearest_physical_density(const Eigen::MatrixBase<Derived>& m) {
    using S = typename Derived::RealScalar;
    if (m.rows() != m.cols()) throw DimensionError("nearest_physical_density: not square");
    CMatrix<S> h = hermitize(m);
    const S tr = h.trace().real();
    if (h.cwiseAbs().maxCoeff() == S(0) || !(tr > std::numeric_limits<S>::epsilon()))
        throw ContractViolation("nearest_physical_density: matrix has no positive trace");
    h /= tr;
    auto es = hermitian_eig(h);
    RVector<S> w = simplex_projection<S>(es.values);
    CMatrix<S> rho = es.vectors * w.template cast<std::complex<S>>().asDiagonal() *
                     es.vectors.adjoint();
    return CMatrix<S>(hermitize(rho));
}

template <class DA, class DB>
auto tensor(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    using S = typename DA::RealScalar;
    if (a.rows() * b.rows() > max_dim || a.cols() * b.cols() > max_dim)
        throw DimensionError("tensor: result exceeds dimension 16");
    CMatrix<S> out = Eigen::kroneckerProduct(a.template cast<std::complex<S>>().eval(),
                                             b.template cast<std::complex<S>>().eval());
    return out;
}

template <class Derived>
bool is_unitary(const Eigen::MatrixBase<Derived>& u, typename Derived::RealScalar tol) {
    const auto n = u.rows();
    return ((u.adjoint() * u).eval() -
            CMatrix<typename Derived::RealScalar>::Identity(n, n))
               .cwiseAbs()
               .maxCoeff() < tol;
}

// reduced state of the qubits flagged in `keep` (bit k <-> qubit k, qubit 0 most significant)
template <class Derived>
auto partial_trace(const Eigen::MatrixBase<Derived>& rho, unsigned keep, int n_qubits) {
    using S = typename Derived::RealScalar;
    std::vector<int> kept, traced;
    for (int q = 0; q < n_qubits; ++q) (keep >> q & 1u ? kept : traced).push_back(q);
    const int dk = 1 << kept.size(), dt = 1 << traced.size();
    auto compose = [&](int ik, int it) {
        int idx = 0;
        for (std::size_t j = 0; j < kept.size(); ++j)
            if (ik >> (kept.size() - 1 - j) & 1) idx |= 1 << (n_qubits - 1 - kept[j]);
        for (std::size_t j = 0; j < traced.size(); ++j)
            if (it >> (traced.size() - 1 - j) & 1) idx |= 1 << (n_qubits - 1 - traced[j]);
        return idx;
    };
    CMatrix<S> out = CMatrix<S>::Zero(dk, dk);
    for (int a = 0; a < dk; ++a)
        for (int b = 0; b < dk; ++b)
            for (int t = 0; t < dt; ++t) out(a, b) += rho(compose(a, t), compose(b, t));
    return out;
}

template <class S = double>
CMatrix<S> pauli(char axis) {
    using C = std::complex<S>;
    CMatrix<S> m(2, 2);
    switch (axis) {
        case 'I': m << C(1), C(0), C(0), C(1); break;
        case 'X': m << C(0), C(1), C(1), C(0); break;
        case 'Y': m << C(0), C(0, -1), C(0, 1), C(0); break;
        case 'Z': m << C(1), C(0), C(0), C(-1); break;
        default: throw ContractViolation("pauli: axis must be one of IXYZ");
    }
    return m;
}

// R(θ, φ) = exp(-iθ/2 (cosφ σx + sinφ σy))
template <class S = double>
CMatrix<S> rotation(S theta, S phi) {
    using C = std::complex<S>;
    const S c = std::cos(theta / 2), s = std::sin(theta / 2);
    CMatrix<S> r(2, 2);
    r << C(c), C(0, -1) * s * std::polar(S(1), -phi), C(0, -1) * s * std::polar(S(1), phi), C(c);
    return r;
}

// principal value in (-π, π]
inline double wrap_phase(double x) {
    double y = std::remainder(x, two_pi);
    if (y <= -std::numbers::pi) y += two_pi;
    return y;
}

}  // namespace donorsim
