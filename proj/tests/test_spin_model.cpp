#include <doctest.h>

#include <random>
#include <set>

#include "donorsim/spin_model.hpp"

using namespace donorsim;

namespace {

double max_abs(const cmat& m) { return m.cwiseAbs().maxCoeff(); }

// independent single-donor Hamiltonian on n ⊗ e, written out from explicit 2x2 spin matrices
cmat donor_hamiltonian(double ze, double zn, double a) {
    const cmat sx = 0.5 * pauli('X'), sy = 0.5 * pauli('Y'), sz = 0.5 * pauli('Z'), id = pauli('I');
    return ze * tensor(id, sz) + zn * tensor(sz, id) +
           a * (tensor(sx, sx) + tensor(sy, sy) + tensor(sz, sz));
}

// frequencies of transitions with a non-negligible ⟨b|op|a⟩
std::vector<double> allowed(const cmat& h, const cmat& op) {
    const auto es = hermitian_eig(h);
    const cmat m = es.vectors.adjoint() * op * es.vectors;
    std::vector<double> f;
    for (int a = 0; a < h.rows(); ++a)
        for (int b = a + 1; b < h.rows(); ++b)
            if (2 * std::abs(m(b, a)) > 0.25) f.push_back(es.values(b) - es.values(a));
    std::sort(f.begin(), f.end());
    return f;
}

std::vector<double> freqs(const std::vector<TransitionLine>& lines, LineChannel c) {
    std::vector<double> f;
    for (const auto& l : lines)
        if (l.channel == c) f.push_back(l.frequency);
    std::sort(f.begin(), f.end());
    return f;
}

cmat random_density(std::mt19937_64& g) {
    std::normal_distribution<double> d;
    cmat a(16, 16);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) a(i, j) = cplx(d(g), d(g));
    const cmat r = a * a.adjoint();
    return r / r.trace();
}

}  // namespace

TEST_CASE("basis convention") {
    CHECK(basis_index(0, 0, 0, 0) == 0);
    CHECK(basis_index(1, 0, 1, 1) == 11);
    CHECK(bit_of(11, Spin::N1) == 1);
    CHECK(bit_of(11, Spin::N2) == 0);
    CHECK(bit_of(11, Spin::E2) == 1);
    // |0⟩ = up: Sz expectation +½ on bit 0
    const cmat rho = product_state_density({0, 1, 0, 1});
    CHECK((rho * spin_operator(Spin::N1, 'Z')).trace().real() == doctest::Approx(0.5));
    CHECK((rho * spin_operator(Spin::N2, 'Z')).trace().real() == doctest::Approx(-0.5));
    CHECK(spin_from_name("e2") == Spin::E2);
    CHECK_THROWS_AS(spin_from_name("e3"), ContractViolation);
}

TEST_CASE("static Hamiltonian without couplings is the Zeeman diagonal") {
    SystemParams p;
    p.a1 = p.a2 = p.j = 0;
    const cmat h = build_static_hamiltonian(p);
    CHECK(max_abs(h - cmat(h.diagonal().asDiagonal())) < 1e-12);
    // all spins up: g µB B / h + γn B
    CHECK(h(0, 0).real() == doctest::Approx(27970.0 + 17.23).epsilon(1e-12));
}

TEST_CASE("static Hamiltonian is Hermitian and traceless") {
    const cmat h = build_static_hamiltonian(SystemParams{});
    CHECK(hermiticity_defect(h) < 1e-12);
    CHECK(std::abs(h.trace()) < 1e-9);
}

TEST_CASE("decoupled donors commute with each donor's own Hamiltonian") {
    SystemParams p;
    p.j = 0;
    const cmat h = build_static_hamiltonian(p);
    const cmat h1 = p.mu_b_over_h * p.g1 * spin_operator(Spin::E1, 'Z') + p.gamma_n * spin_operator(Spin::N1, 'Z') +
                    p.a1 * (spin_operator(Spin::E1, 'X') * spin_operator(Spin::N1, 'X') +
                            spin_operator(Spin::E1, 'Y') * spin_operator(Spin::N1, 'Y') +
                            spin_operator(Spin::E1, 'Z') * spin_operator(Spin::N1, 'Z'));
    CHECK(max_abs(h * h1 - h1 * h) < 1e-9);
    // each donor conserves its own Sz + Iz
    const cmat m1 = spin_operator(Spin::E1, 'Z') + spin_operator(Spin::N1, 'Z');
    CHECK(max_abs(h * m1 - m1 * h) < 1e-9);
}

TEST_CASE("invalid parameters are rejected") {
    SystemParams p;
    p.b0 = 0;
    CHECK_THROWS_AS(build_static_hamiltonian(p), ContractViolation);
    p = {};
    p.j = -1;
    CHECK_THROWS_AS(build_static_hamiltonian(p), ContractViolation);
    p = {};
    p.g2 = p.g1 * 1.02;
    CHECK_THROWS_AS(build_static_hamiltonian(p), ContractViolation);
}

TEST_CASE("block diagonalization preserves the spectrum and sector structure") {
    const cmat h = build_static_hamiltonian(SystemParams{});
    const cmat b = block_diagonalize(h);
    CHECK((hermitian_eig(b).values - hermitian_eig(h).values).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 0; i < 16; ++i)
        for (int k = 0; k < 16; ++k)
            if (sector_of(i) != sector_of(k)) CHECK(std::abs(b(i, k)) == 0.0);
}

TEST_CASE("hybridization angle") {
    CHECK(hybridization_angle(0, 50) == 0.0);
    CHECK(hybridization_angle(12, 112) == doctest::Approx(0.5 * std::atan(12.0 / 112)).epsilon(1e-12));
    CHECK(hybridization_angle(12, 112) == doctest::Approx(0.0534).epsilon(1e-3));
    CHECK(hybridization_angle(12, 2) == doctest::Approx(0.7028).epsilon(1e-3));
    CHECK_THROWS_AS(hybridization_angle(0, 0), ContractViolation);
    double prev = -1;
    for (double j = 0; j < 1000; j += 10) {
        const double t = hybridization_angle(j, 5);
        CHECK(t > prev);
        prev = t;
    }
    CHECK(hybridization_angle(1e9, 1) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-6));
}

TEST_CASE("ESR spectrum of bare electrons: one line each at the Zeeman frequency") {
    SystemParams p;
    p.a1 = p.a2 = p.j = 0;
    const auto lines = esr_spectrum(p);
    for (auto c : {LineChannel::Electron1, LineChannel::Electron2}) {
        const auto f = freqs(lines, c);
        REQUIRE(f.size() == 1);
        CHECK(f[0] == doctest::Approx(27970.0).epsilon(1e-12));
    }
}

TEST_CASE("ESR spectrum with a single hyperfine matches a brute-force donor oracle") {
    SystemParams p;
    p.a2 = p.j = 0;
    const auto f = freqs(esr_spectrum(p), LineChannel::Electron1);
    const cmat hd = donor_hamiltonian(p.mu_b_over_h * p.g1 * p.b0, p.gamma_n * p.b0, p.a1);
    const cmat sx_e = tensor(pauli('I'), cmat(0.5 * pauli('X')));
    std::vector<double> ref;
    for (double x : allowed(hd, sx_e))
        if (x > 1000) ref.push_back(x);
    REQUIRE(f.size() == 2);
    REQUIRE(ref.size() == 2);
    for (int k = 0; k < 2; ++k) CHECK(f[k] == doctest::Approx(ref[k]).epsilon(1e-12));
    CHECK(f[1] - f[0] == doctest::Approx(p.a1).epsilon(2e-3));
}

TEST_CASE("ESR spectrum of electron 1 with device parameters has six lines") {
    const auto lines = esr_spectrum(SystemParams{});
    int anti = 0, par = 0;
    for (const auto& l : lines) {
        if (l.channel != LineChannel::Electron1) continue;
        CHECK(l.frequency > 0);
        CHECK(l.amplitude > 0);
        CHECK(l.amplitude <= 1);
        (bit_of(l.from_index, Spin::N1) != bit_of(l.from_index, Spin::N2) ? anti : par)++;
        CHECK(bit_of(l.from_index, Spin::E1) == 1);
        CHECK(bit_of(l.to_index, Spin::E1) == 0);
    }
    CHECK(anti == 4);
    CHECK(par == 2);
}

TEST_CASE("ESR spectrum is symmetric under swapping the donors") {
    SystemParams p, q;
    q.a1 = p.a2;
    q.a2 = p.a1;
    q.g1 = p.g2 * 1.001;
    p.g2 = q.g1;
    q.g2 = p.g1;
    const auto a = esr_spectrum(p), b = esr_spectrum(q);
    const auto a1 = freqs(a, LineChannel::Electron1), b2 = freqs(b, LineChannel::Electron2);
    const auto a2 = freqs(a, LineChannel::Electron2), b1 = freqs(b, LineChannel::Electron1);
    REQUIRE(a1.size() == b2.size());
    REQUIRE(a2.size() == b1.size());
    for (std::size_t k = 0; k < a1.size(); ++k) CHECK(a1[k] == doctest::Approx(b2[k]).epsilon(1e-10));
    for (std::size_t k = 0; k < a2.size(); ++k) CHECK(a2[k] == doctest::Approx(b1[k]).epsilon(1e-10));
}

TEST_CASE("NMR spectrum") {
    SystemParams p;
    const auto ion = nmr_spectrum(p, false);
    for (auto c : {LineChannel::Nucleus1, LineChannel::Nucleus2}) {
        const auto f = freqs(ion, c);
        REQUIRE(f.size() == 1);
        CHECK(f[0] == doctest::Approx(17.23).epsilon(1e-12));
    }

    // neutral, decoupled donors: compare with the single-donor oracle
    p.j = 0;
    const auto f1 = freqs(nmr_spectrum(p, true), LineChannel::Nucleus1);
    const cmat hd = donor_hamiltonian(p.mu_b_over_h * p.g1 * p.b0, p.gamma_n * p.b0, p.a1);
    const cmat sx_n = tensor(cmat(0.5 * pauli('X')), pauli('I'));
    std::vector<double> ref;
    for (double x : allowed(hd, sx_n))
        if (x < 1000) ref.push_back(x);
    REQUIRE(f1.size() == ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(f1[k] == doctest::Approx(ref[k]).epsilon(1e-9));
    // leading order |γB − A/2| for one electron orientation, A/2 + γB for the other
    const double lo = std::abs(p.gamma_n - p.a1 / 2), hi = p.a1 / 2 + p.gamma_n;
    CHECK(std::abs(f1.front() - lo) < 0.5);
    CHECK(std::abs(f1.back() - hi) < 0.5);

    SystemParams z;
    z.a1 = z.a2 = 0;
    const auto n0 = nmr_spectrum(z, true), i0 = nmr_spectrum(z, false);
    for (auto c : {LineChannel::Nucleus1, LineChannel::Nucleus2}) {
        const auto a = freqs(n0, c), b = freqs(i0, c);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
}

TEST_CASE("expectation_axis examples") {
    const cmat down = product_state_density({1, 1, 1, 1});
    CHECK(expectation_axis(down, Spin::N1, Axis::Z).up_proportion == doctest::Approx(0.0));
    CHECK(expectation_axis(down, Spin::N1, Axis::Z).bloch_norm == doctest::Approx(1.0));

    cvec plus = cvec::Zero(16);
    plus(basis_index(0, 1, 1, 1)) = plus(basis_index(1, 1, 1, 1)) = 1 / std::sqrt(2.0);
    const cmat rp = plus * plus.adjoint();
    CHECK(expectation_axis(rp, Spin::N1, Axis::X).up_proportion == doctest::Approx(1.0));
    CHECK(expectation_axis(rp, Spin::N1, Axis::Y).up_proportion == doctest::Approx(0.5));

    // n1 maximally entangled with e1: its marginal is the centre of the sphere
    cvec bell = cvec::Zero(16);
    bell(basis_index(0, 1, 0, 1)) = bell(basis_index(1, 1, 1, 1)) = 1 / std::sqrt(2.0);
    const cmat rb = bell * bell.adjoint();
    CHECK(expectation_axis(rb, Spin::N1, Axis::Z).bloch_norm == doctest::Approx(0.0));
    CHECK(max_abs(partial_trace(rb, 0b0001, 4) - 0.5 * cmat::Identity(2, 2)) < 1e-12);
    CHECK(expectation_axis(rb, Spin::N2, Axis::Z).bloch_norm == doctest::Approx(1.0));
}

TEST_CASE("Bloch vectors of random states stay inside the unit ball") {
    std::mt19937_64 g(99);
    for (int trial = 0; trial < 50; ++trial) {
        const cmat rho = random_density(g);
        for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2})
            CHECK(expectation_axis(rho, s, Axis::Z).bloch_norm <= 1 + 1e-9);
    }
}
