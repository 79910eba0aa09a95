#include "donorsim/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace donorsim {

const char* spin_name(Spin s) {
    switch (s) {
        case Spin::N1: return "n1";
        case Spin::N2: return "n2";
        case Spin::E1: return "e1";
        case Spin::E2: return "e2";
    }
    return "?";
}

Spin spin_from_name(const std::string& name) {
    for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2})
        if (name == spin_name(s)) return s;
    throw ContractViolation("unknown spin '" + name + "'");
}

const char* channel_name(LineChannel c) {
    switch (c) {
        case LineChannel::Electron1: return "electron-1";
        case LineChannel::Electron2: return "electron-2";
        case LineChannel::Nucleus1: return "nucleus-1";
        case LineChannel::Nucleus2: return "nucleus-2";
    }
    return "?";
}

void SystemParams::validate() const {
    // library-level checks allow zero couplings (decoupled limits are useful);
    // the config validator is stricter
    require(b0 > 0, "SystemParams: b0 must be positive");
    require(a1 >= 0 && a2 >= 0, "SystemParams: hyperfine couplings must be non-negative");
    require(j >= 0, "SystemParams: exchange must be non-negative");
    require(g1 > 0 && std::abs(g1 - g2) / g1 < 0.01, "SystemParams: g-factors must agree within 1%");
    require(mu_b_over_h > 0, "SystemParams: mu_b_over_h must be positive");
}

cmat spin_operator(Spin s, char axis) {
    cmat m = cmat::Identity(1, 1);
    for (int k = 0; k < n_spins; ++k) {
        cmat f = k == position(s) ? cmat(0.5 * pauli(axis)) : pauli('I');
        m = tensor(m, f);
    }
    return m;
}

cmat species_operator(bool electrons, char axis) {
    return electrons ? cmat(spin_operator(Spin::E1, axis) + spin_operator(Spin::E2, axis))
                     : cmat(spin_operator(Spin::N1, axis) + spin_operator(Spin::N2, axis));
}

namespace {

cmat dot(Spin a, Spin b) {
    cmat m = cmat::Zero(hilbert_dim, hilbert_dim);
    for (char ax : {'X', 'Y', 'Z'}) m += spin_operator(a, ax) * spin_operator(b, ax);
    return m;
}

cmat zeeman(const SystemParams& p) {
    const double ze = p.mu_b_over_h * p.b0;
    return ze * (p.g1 * spin_operator(Spin::E1, 'Z') + p.g2 * spin_operator(Spin::E2, 'Z')) +
           p.gamma_n * p.b0 * species_operator(false, 'Z');
}

}  // namespace

cmat build_static_hamiltonian(const SystemParams& p) {
    p.validate();
    cmat h = zeeman(p);
    h += p.a1 * dot(Spin::E1, Spin::N1) + p.a2 * dot(Spin::E2, Spin::N2) + p.j * dot(Spin::E1, Spin::E2);
    return hermitize(h);
}

cmat build_ionized_hamiltonian(const SystemParams& p) {
    p.validate();
    return zeeman(p);
}

std::array<int, 2> sector_of(int index) {
    int me = 0, mn = 0;
    for (Spin s : {Spin::E1, Spin::E2}) me += bit_of(index, s) ? -1 : 1;
    for (Spin s : {Spin::N1, Spin::N2}) mn += bit_of(index, s) ? -1 : 1;
    return {me, mn};
}

cmat block_diagonalize(const cmat& h) {
    const int n = int(h.rows());
    require(n == hilbert_dim, "block_diagonalize: expects the 16-dim four-spin space");
    std::map<std::array<int, 2>, std::vector<int>> sectors;
    for (int i = 0; i < n; ++i) sectors[sector_of(i)].push_back(i);

    double off = 0;
    cmat masked = cmat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            if (sector_of(i) == sector_of(k)) masked(i, k) = h(i, k);
            else off = std::max(off, std::abs(h(i, k)));
        }
    if (off < 1e-12) return masked;

    const auto es = hermitian_eig(h);
    std::map<std::array<int, 2>, std::vector<int>> owned;
    for (int a = 0; a < n; ++a) {
        std::array<int, 2> best{};
        double wbest = -1;
        for (const auto& [key, idx] : sectors) {
            double w = 0;
            for (int i : idx) w += std::norm(es.vectors(i, a));
            if (w > wbest) wbest = w, best = key;
        }
        owned[best].push_back(a);
    }

    cmat out = cmat::Zero(n, n);
    for (const auto& [key, idx] : sectors) {
        const auto& cols = owned[key];
        if (cols.size() != idx.size())
            throw ContractViolation("block_diagonalize: sectors are too strongly mixed to separate");
        const int d = int(idx.size());
        cmat m(d, d);
        rvec e(d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) m(r, c) = es.vectors(idx[r], cols[c]);
        for (int c = 0; c < d; ++c) e(c) = es.values(cols[c]);
        // closest unitary to the projected eigenvectors
        Eigen::JacobiSVD<cmat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const cmat v = svd.matrixU() * svd.matrixV().adjoint();
        const cmat blk = v * e.cast<cplx>().asDiagonal() * v.adjoint();
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) out(idx[r], idx[c]) = blk(r, c);
    }
    return hermitize(out);
}

double hybridization_angle(double j, double delta) {
    if (j == 0 && delta == 0) throw ContractViolation("hybridization_angle: undefined for j = delta = 0");
    return 0.5 * std::atan2(j, delta);
}

EigenStructure eigen_structure(const cmat& h) {
    EigenStructure s{hermitian_eig(h), {}, {}};
    const int n = int(h.rows());
    for (int a = 0; a < n; ++a) {
        Eigen::Index i = 0;
        const double w = s.eig.vectors.col(a).cwiseAbs2().maxCoeff(&i);
        s.dominant.push_back(int(i));
        s.dominant_weight.push_back(w);
    }
    return s;
}

namespace {

std::string condition_label(int index, Spin target) {
    static const char* nuc[] = {"⇑", "⇓"};
    static const char* ele[] = {"↑", "↓"};
    std::string out;
    for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2}) {
        if (s == target) continue;
        if (!out.empty()) out += ' ';
        out += std::string(spin_name(s)) + "=" + (is_electron(s) ? ele : nuc)[bit_of(index, s)];
    }
    return out;
}

std::vector<TransitionLine> enumerate_lines(const cmat& h, bool electrons, const SpectrumOptions& opt) {
    const EigenStructure es = eigen_structure(h);
    const int n = int(h.rows());
    const Spin spins[2] = {electrons ? Spin::E1 : Spin::N1, electrons ? Spin::E2 : Spin::N2};
    const LineChannel chans[2] = {electrons ? LineChannel::Electron1 : LineChannel::Nucleus1,
                                  electrons ? LineChannel::Electron2 : LineChannel::Nucleus2};
    const cmat& v = es.eig.vectors;
    const cmat op[2] = {v.adjoint() * spin_operator(spins[0], 'X') * v,
                        v.adjoint() * spin_operator(spins[1], 'X') * v};

    // group numerically degenerate eigenvalues so amplitudes are basis independent
    std::vector<std::vector<int>> clusters;
    for (int a = 0; a < n; ++a) {
        if (!clusters.empty() && es.eig.values(a) - es.eig.values(clusters.back().front()) < 1e-7)
            clusters.back().push_back(a);
        else
            clusters.push_back({a});
    }

    std::vector<TransitionLine> raw;
    for (const auto& ca : clusters)
        for (const auto& cb : clusters) {
            const double f = es.eig.values(cb.front()) - es.eig.values(ca.front());
            if (f <= 0) continue;
            double strength[2] = {0, 0}, collective = 0;
            int best[2][2] = {{ca[0], cb[0]}, {ca[0], cb[0]}};
            double bestval[2] = {-1, -1};
            for (int a : ca)
                for (int b : cb) {
                    const cplx m0 = op[0](b, a), m1 = op[1](b, a);
                    strength[0] += std::norm(m0);
                    strength[1] += std::norm(m1);
                    collective += std::norm(m0 + m1);
                    for (int k = 0; k < 2; ++k) {
                        const double mk = std::abs(k ? m1 : m0);
                        if (mk > bestval[k]) bestval[k] = mk, best[k][0] = a, best[k][1] = b;
                    }
                }
            const double amp = 2.0 * std::sqrt(collective);
            if (amp <= opt.min_amplitude) continue;
            const double total = strength[0] + strength[1];
            for (int k = 0; k < 2; ++k) {
                if (strength[k] / total < 0.5 - 1e-9) continue;
                int lo = es.dominant[best[k][0]], hi = es.dominant[best[k][1]];
                TransitionLine line;
                line.frequency = f;
                line.channel = chans[k];
                line.amplitude = std::min(1.0, amp);
                // orient: from = target down, to = target up
                const bool hi_is_up = bit_of(hi, spins[k]) == 0;
                line.from_index = hi_is_up ? lo : hi;
                line.to_index = hi_is_up ? hi : lo;
                line.signed_frequency = hi_is_up ? f : -f;
                line.condition = condition_label(line.from_index, spins[k]);
                raw.push_back(line);
            }
        }

    std::stable_sort(raw.begin(), raw.end(), [](const auto& x, const auto& y) {
        return x.channel != y.channel ? x.channel < y.channel : x.frequency < y.frequency;
    });
    std::vector<TransitionLine> out;
    for (const auto& line : raw) {
        if (!out.empty() && out.back().channel == line.channel &&
            line.frequency - out.back().frequency < opt.merge_tolerance) {
            auto& keep = out.back();
            keep.merged = true;
            if (line.amplitude > keep.amplitude) {
                const double f0 = keep.frequency;
                keep = line;
                keep.frequency = f0;
                keep.merged = true;
            }
            continue;
        }
        out.push_back(line);
    }
    return out;
}

}  // namespace

std::vector<TransitionLine> transition_lines(const cmat& h, bool electrons, const SpectrumOptions& opt) {
    return enumerate_lines(h, electrons, opt);
}

std::vector<TransitionLine> esr_spectrum(const SystemParams& p, const SpectrumOptions& opt) {
    return enumerate_lines(build_static_hamiltonian(p), true, opt);
}

std::vector<TransitionLine> nmr_spectrum(const SystemParams& p, bool neutral, const SpectrumOptions& opt) {
    return enumerate_lines(neutral ? build_static_hamiltonian(p) : build_ionized_hamiltonian(p), false, opt);
}

std::array<double, 3> bloch_vector(const cmat& rho, Spin s) {
    std::array<double, 3> b{};
    const char axes[3] = {'X', 'Y', 'Z'};
    for (int k = 0; k < 3; ++k) b[k] = 2.0 * (rho * spin_operator(s, axes[k])).trace().real();
    return b;
}

AxisExpectation expectation_axis(const cmat& rho, Spin s, Axis axis) {
    require(rho.rows() == hilbert_dim && rho.cols() == hilbert_dim, "expectation_axis: expects a 16x16 state");
    const auto b = bloch_vector(rho, s);
    const int k = axis == Axis::X ? 0 : axis == Axis::Y ? 1 : 2;
    return {0.5 * (1.0 + b[k]), std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])};
}

cmat product_state_density(std::array<int, 4> bits) {
    cmat rho = cmat::Zero(hilbert_dim, hilbert_dim);
    const int i = basis_index(bits[0], bits[1], bits[2], bits[3]);
    rho(i, i) = 1.0;
    return rho;
}

}  // namespace donorsim
