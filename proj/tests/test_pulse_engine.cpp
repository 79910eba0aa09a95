#include <doctest.h>

#include <random>

#include "donorsim/experiments.hpp"
#include "donorsim/pulse_engine.hpp"
#include "donorsim/tomography.hpp"

using namespace donorsim;

namespace {

constexpr double pi = std::numbers::pi;

double max_abs(const cmat& m) { return m.cwiseAbs().maxCoeff(); }

cvec basis(int i) { return cvec::Unit(hilbert_dim, i); }

const Device& device() {
    static const Device d{SystemParams{}};
    return d;
}

}  // namespace

TEST_CASE("mode names round trip") {
    CHECK(mode_from_name(mode_name(Mode::GATE_MODEL)) == Mode::GATE_MODEL);
    CHECK(mode_from_name(mode_name(Mode::FULL_DYNAMICS)) == Mode::FULL_DYNAMICS);
    CHECK_THROWS_AS(mode_from_name("LAB_FRAME"), ContractViolation);
}

TEST_CASE("model validation") {
    PulseSpec p;
    p.duration = -1;
    CHECK_THROWS_AS(p.validate(), ContractViolation);
    p.duration = 1;
    p.rabi_frequency = -0.1;
    CHECK_THROWS_AS(p.validate(), ContractViolation);
    PIRSModel m;
    m.time_constant = 0;
    CHECK_THROWS_AS(m.validate(), ContractViolation);
    NoiseModel n;
    n.p_up = 0.6;
    CHECK_THROWS_AS(n.validate(), ContractViolation);
    n.p_up = 0.5;
    CHECK_NOTHROW(n.validate());
    n.sigma_f[2] = -1e-3;
    CHECK_THROWS_AS(n.validate(), ContractViolation);
}

TEST_CASE("PIRS drift") {
    PIRSModel m;
    m.enabled = true;
    m.shift_amplitude = 120;
    m.time_constant = 100;
    CHECK(pirs_detuning(0, m, true) == 0.0);
    CHECK(pirs_detuning(1e5, m, true) == doctest::Approx(120));
    CHECK(pirs_detuning(100, m, true) == doctest::Approx(120 * (1 - std::exp(-1.0))));
    m.accumulated_state = 120;
    CHECK(pirs_detuning(1e5, m, false) == doctest::Approx(0).epsilon(1e-9));
    CHECK(pirs_detuning(50, m, false) == doctest::Approx(120 * std::exp(-0.5)));

    // mean over the interval against a midpoint quadrature
    m.accumulated_state = 30;
    const double t = 250;
    double q = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) q += pirs_detuning((k + 0.5) * t / n, m, true);
    CHECK(pirs_mean_detuning(t, m, true) == doctest::Approx(q / n).epsilon(1e-8));
    CHECK(pirs_mean_detuning(0, m, true) == 30);

    m.enabled = false;
    CHECK(pirs_detuning(100, m, true) == 0.0);
}

TEST_CASE("rotating-frame Hamiltonian, two-level reduction") {
    const double f0 = 25.0, rabi = 0.4;
    cmat h(2, 2);
    h << cplx(f0 / 2), cplx(0), cplx(0), cplx(-f0 / 2);
    const cmat fz = 0.5 * pauli('Z'), sx = 0.5 * pauli('X'), sy = 0.5 * pauli('Y');

    PulseSpec p;
    p.carrier_frequency = f0;
    p.rabi_frequency = 0;
    CHECK(max_abs(rotating_frame_hamiltonian(h, fz, sx, sy, p) - (h - f0 * fz)) < 1e-12);

    p.rabi_frequency = rabi;
    CHECK(max_abs(rotating_frame_hamiltonian(h, fz, sx, sy, p) - cmat(rabi / 2 * pauli('X'))) < 1e-12);

    p.phase = pi / 2;
    CHECK(max_abs(rotating_frame_hamiltonian(h, fz, sx, sy, p) - cmat(rabi / 2 * pauli('Y'))) < 1e-12);

    for (double df : {-0.7, 0.1, 0.3, 2.0}) {
        p.detuning = df;
        const auto ev = hermitian_eig(rotating_frame_hamiltonian(h, fz, sx, sy, p)).values;
        CHECK(ev(1) - ev(0) == doctest::Approx(std::hypot(rabi, df)).epsilon(1e-12));
    }
}

TEST_CASE("rotating-frame Hamiltonian of the device is Hermitian") {
    PulseSpec p;
    p.carrier_frequency = device().electron_zeeman();
    p.rabi_frequency = 0.5;
    p.phase = 0.3;
    const cmat h = rotating_frame_hamiltonian(device().static_hamiltonian(), p);
    CHECK(hermiticity_defect(h) < 1e-12);
}

TEST_CASE("labeled pulses resolve the addressed line") {
    const Device& dev = device();
    const TransitionLabel l{Spin::E1, {1, 0, -1, 1}};
    const auto r = dev.resolve(l);
    CHECK(r.down_index == basis_index(1, 0, 1, 1));
    CHECK(r.up_index == basis_index(1, 0, 0, 1));
    const PulseSpec p = dev.labeled_pulse(Channel::ESR, l, 2 * pi, 0);
    // 2π at the default 0.5 MHz electron Rabi frequency completes in 2 µs
    CHECK(p.duration == doctest::Approx(2.0));
    bool found = false;
    for (const auto& line : dev.esr_lines())
        if (line.channel == LineChannel::Electron1 && std::abs(line.signed_frequency - p.carrier_frequency) < 1e-9)
            found = true;
    CHECK(found);
    CHECK_THROWS_AS(dev.labeled_pulse(Channel::NMR, l, pi, 0), ContractViolation);
}

TEST_CASE("gate model: conditional π and 2π on electron 1") {
    const Device& dev = device();
    const TransitionLabel l{Spin::E1, {1, 0, -1, 1}};
    const cmat upi = pulse_unitary(dev, dev.labeled_pulse(Channel::ESR, l, pi, 0), Mode::GATE_MODEL, 0);
    const cvec out = upi * basis(basis_index(1, 0, 1, 1));
    CHECK(std::abs(out(basis_index(1, 0, 0, 1))) == doctest::Approx(1.0));
    // unconditioned components are untouched
    CHECK(std::abs((upi * basis(basis_index(0, 0, 1, 1)))(basis_index(0, 0, 1, 1))) == doctest::Approx(1.0));

    // 2π: the conditioned component picks up −1 relative to the rest
    const cmat u2 = pulse_unitary(dev, dev.labeled_pulse(Channel::ESR, l, 2 * pi, 0), Mode::GATE_MODEL, 0);
    const cvec psi = (basis(basis_index(1, 0, 1, 1)) + basis(basis_index(0, 0, 1, 1))) / std::sqrt(2.0);
    const cvec o2 = u2 * psi;
    const cplx ratio = o2(basis_index(1, 0, 1, 1)) / o2(basis_index(0, 0, 1, 1));
    CHECK(std::abs(ratio - cplx(-1)) < 1e-12);
    CHECK(is_unitary(u2, 1e-12));
}

TEST_CASE("full dynamics: resonant 2π completes in 2 µs with a π phase") {
    const Device& dev = device();
    const TransitionLabel l{Spin::E1, {1, 0, -1, 1}};
    const PulseSpec p = dev.labeled_pulse(Channel::ESR, l, 2 * pi, 0);
    const cmat u = pulse_unitary(dev, p, Mode::FULL_DYNAMICS, 0);
    CHECK(is_unitary(u, 1e-9));
    const cvec psi = (basis(basis_index(1, 0, 1, 1)) + basis(basis_index(0, 0, 1, 1))) / std::sqrt(2.0);
    const cvec o = u * psi;
    CHECK(std::norm(o(basis_index(1, 0, 1, 1))) > 0.499);
    const double rel = std::arg(o(basis_index(1, 0, 1, 1)) / o(basis_index(0, 0, 1, 1)));
    CHECK(std::abs(std::abs(rel) - pi) < 0.05);
}

TEST_CASE("full dynamics propagators are unitary and preserve trace") {
    const Device& dev = device();
    std::mt19937_64 g(3);
    std::uniform_real_distribution<double> u(-60, 60), d(0, 5);
    for (int trial = 0; trial < 10; ++trial) {
        PulseSpec p;
        p.channel = trial % 2 ? Channel::NMR : Channel::ESR;
        p.carrier_frequency = p.channel == Channel::ESR ? dev.electron_zeeman() + u(g) : 17.23 + u(g);
        p.rabi_frequency = 0.3;
        p.phase = u(g);
        p.duration = d(g);
        const cmat w = pulse_unitary(dev, p, Mode::FULL_DYNAMICS, d(g));
        CHECK(is_unitary(w, 1e-9));
    }
    const Sequence seq = bell_prep(dev, Mode::FULL_DYNAMICS);
    const auto r = run_sequence(dev, seq, {}, {}, Mode::FULL_DYNAMICS, 0);
    CHECK(std::abs(r.final_state.trace() - 1.0) < 1e-9);
    CHECK(hermiticity_defect(r.final_state) < 1e-9);
}

TEST_CASE("idle evolution under a quasi-static detuning") {
    const Device& dev = device();
    Perturbation pert;
    pert.delta[position(Spin::N1)] = 0.05;
    const double t = 3.0;
    const cmat u = idle_unitary(dev, t, Mode::GATE_MODEL, 0, pert);
    const cplx a = u(basis_index(0, 1, 1, 1), basis_index(0, 1, 1, 1));
    const cplx b = u(basis_index(1, 1, 1, 1), basis_index(1, 1, 1, 1));
    CHECK(std::abs(wrap_phase(std::arg(b / a) - two_pi * 0.05 * t)) < 1e-12);
    CHECK(max_abs(idle_unitary(dev, t, Mode::GATE_MODEL, 0) - cmat::Identity(16, 16)) < 1e-12);
}

TEST_CASE("gate model and full dynamics agree for well-resolved drives") {
    // nearest unintended ESR line sits ~1 MHz away, so 0.02 MHz is the resolved regime
    DriveSettings slow;
    slow.esr_rabi = 0.02;
    slow.nmr_rabi = 0.01;
    const Device dev(SystemParams{}, slow);
    const auto g = run_sequence(dev, bell_prep(dev, Mode::GATE_MODEL), {}, {}, Mode::GATE_MODEL, 0);
    const auto f = run_sequence(dev, bell_prep(dev, Mode::FULL_DYNAMICS), {}, {}, Mode::FULL_DYNAMICS, 0);
    const cmat ng = nuclear_state(g.final_state), nf = nuclear_state(f.final_state);
    CHECK(fidelity(nf, bell_psi_plus()) >= 0.999);
    CHECK(fidelity(ng, bell_psi_plus()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("geometric phase of a closed loop") {
    CHECK(geometric_phase_of_drive(0, 0.5, 1) == doctest::Approx(-pi));
    CHECK(geometric_phase_of_drive(0.375, 0.5, 1) == doctest::Approx(-0.4 * pi));
    CHECK(geometric_phase_of_drive(1e9, 0.5, 1) == doctest::Approx(0).epsilon(1e-9));
    CHECK(geometric_phase_of_drive(0, 0.5, 2) == doctest::Approx(-2 * pi));
    CHECK_THROWS_AS(geometric_phase_of_drive(0, 0, 1), ContractViolation);
    for (double r : {0.0, 0.3, 0.75, 1.5, 4.0})
        for (int n : {1, 2, 3}) {
            const double want = wrap_phase(geometric_phase_of_drive(r * 0.5, 0.5, n));
            CHECK(std::abs(wrap_phase(simulate_geometric_phase(r * 0.5, 0.5, n) - want)) < 1e-3);
        }
}

TEST_CASE("selectivity warning") {
    const Device& dev = device();
    // the nearest other ESR line is ~1 MHz away from this one
    PulseSpec p = dev.labeled_pulse(Channel::ESR, {Spin::E1, {1, 0, -1, 1}}, pi, 0, 0.1);
    CHECK_FALSE(selectivity_warning(dev, p));
    p.rabi_frequency = 0.5;
    CHECK(selectivity_warning(dev, p));
}

TEST_CASE("initialization channel") {
    const cmat rho = cmat::Identity(16, 16) / 16.0;
    const cmat r = initialize_spin(rho, Spin::E1, 1, 0.2);
    CHECK(std::abs(r.trace() - 1.0) < 1e-12);
    CHECK(expectation_axis(r, Spin::E1, Axis::Z).up_proportion == doctest::Approx(0.2));
    // other spins are untouched
    CHECK(expectation_axis(r, Spin::N1, Axis::Z).up_proportion == doctest::Approx(0.5));
    CHECK_THROWS_AS(initialize_spin(rho, Spin::E1, 2, 0), ContractViolation);
}

TEST_CASE("run_sequence basics") {
    const Device& dev = device();
    RunOptions o;
    o.initial_state = product_state_density({0, 1, 0, 1});
    const auto r = run_sequence(dev, {}, {}, {}, Mode::GATE_MODEL, 0, o);
    CHECK(max_abs(r.final_state - *o.initial_state) < 1e-15);

    Sequence bad{SequenceStep::make_measure(Spin::N1)};
    RunOptions shots;
    shots.n_shots = 3;
    CHECK_THROWS_AS(run_sequence(dev, bad, {}, {}, Mode::GATE_MODEL, 0, shots), ContractViolation);
    Sequence electron{SequenceStep::make_initialize(Spin::E1, 1), SequenceStep::make_measure(Spin::E1)};
    CHECK_THROWS_AS(run_sequence(dev, electron, {}, {}, Mode::GATE_MODEL, 0, shots), ContractViolation);
}

TEST_CASE("Bell preparation in the gate model yields Ψ+") {
    const Device& dev = device();
    const auto r = run_sequence(dev, bell_prep(dev, Mode::GATE_MODEL), {}, {}, Mode::GATE_MODEL, 0);
    const cmat n = nuclear_state(r.final_state);
    CHECK(fidelity(n, bell_psi_plus()) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(concurrence(n) == doctest::Approx(1.0).epsilon(1e-9));

    // after the first π/2 pairs the state is an equal superposition of n1 (intermediate state)
    const Sequence full = bell_prep(dev, Mode::GATE_MODEL);
    const Sequence part(full.begin(), full.begin() + 5);
    const cmat n1 = partial_trace(run_sequence(dev, part, {}, {}, Mode::GATE_MODEL, 0).final_state, 0b0001, 4);
    CHECK(n1(0, 0).real() == doctest::Approx(0.5));
    CHECK(std::abs(n1(0, 1)) == doctest::Approx(0.5));
}

TEST_CASE("shot records are deterministic across worker counts") {
    const Device& dev = device();
    Sequence seq = bell_prep(dev, Mode::GATE_MODEL);
    seq.push_back(SequenceStep::make_measure(Spin::N1));
    seq.push_back(SequenceStep::make_measure(Spin::N2));
    NoiseModel nm;
    nm.p_up = 0.1;
    nm.sigma_f = {0, 0, 0.01, 0.01};
    RunOptions a, b;
    a.n_shots = b.n_shots = 64;
    a.workers = 1;
    b.workers = 6;
    const auto ra = run_sequence(dev, seq, nm, {}, Mode::GATE_MODEL, 99, a);
    const auto rb = run_sequence(dev, seq, nm, {}, Mode::GATE_MODEL, 99, b);
    REQUIRE(ra.shots.size() == 64);
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(ra.shots[i].outcomes == rb.shots[i].outcomes);
        CHECK(ra.shots[i].rng_stream_id == rb.shots[i].rng_stream_id);
        for (int o : ra.shots[i].outcomes) CHECK((o == 0 || o == 1));
    }
    CHECK(max_abs(ra.final_state - rb.final_state) == 0.0);
    // Ψ+ outcomes are always anti-correlated
    for (const auto& s : ra.shots)
        if (nm.p_up == 0) CHECK(s.outcomes[0] != s.outcomes[1]);
}

TEST_CASE("phase map landmarks") {
    const Device& dev = device();
    const NoiseModel quiet;
    const auto zero = phase_map(dev, {-5.0, 0.0, 3.0}, {0.0}, Mode::GATE_MODEL, quiet);
    for (double v : zero.p_flip) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    const PhaseMapLandmarks lm = phase_map_landmarks(dev);
    const auto cz = phase_map(dev, {lm.cz_offset}, {rotation_duration(dev, 2 * pi, lm.cz_amplitude)},
                              Mode::GATE_MODEL, quiet);
    CHECK(cz.p_flip[0] < 1e-3);
    const auto dd = phase_map(dev, {lm.dd_offset}, {rotation_duration(dev, pi, lm.dd_amplitude)}, Mode::GATE_MODEL,
                              quiet, true);
    CHECK(dd.axes[0][0][3] < 0.05);

    // full dynamics at the default 0.5 MHz drive leaks into the line 1 MHz away;
    // a resolved drive reproduces the gate-model landmark
    const auto fd = phase_map(dev, {lm.cz_offset}, {0.0, rotation_duration(dev, 2 * pi, lm.cz_amplitude)},
                              Mode::FULL_DYNAMICS, quiet);
    CHECK(fd.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fd.at(0, 1) < 0.05);
    DriveSettings slow;
    slow.esr_rabi = 0.02;
    const Device sd(SystemParams{}, slow);
    const auto fs = phase_map(sd, {lm.cz_offset}, {rotation_duration(sd, 2 * pi, lm.cz_amplitude)},
                              Mode::FULL_DYNAMICS, quiet);
    CHECK(fs.p_flip[0] < 1e-3);
    CHECK_THROWS_AS(phase_map(dev, {}, {1.0}, Mode::GATE_MODEL, quiet), ContractViolation);
}

TEST_CASE("shot estimators") {
    CHECK(p_flip({0, 1, 0, 1}) == 1.0);
    CHECK(p_flip({1, 1, 1, 1}) == 0.0);
    CHECK(p_flip({0, 0, 1, 1, 0}) == 0.5);
    CHECK_THROWS_AS(p_flip({1}), ContractViolation);
    CHECK(p_up({1, 1, 1}) == 1.0);
    CHECK(p_up({0, 0}) == 0.0);
    CHECK(p_up({1, 0, 0, 1}) == 0.5);
    CHECK_THROWS_AS(p_up({}), ContractViolation);

    ShotRecord r;
    r.spins = {Spin::N1, Spin::N2};
    r.outcomes = {0, 1};
    CHECK(up_flags({r, r}, Spin::N1) == std::vector<int>{1, 1});
    CHECK(outcome_bits({r}, Spin::N2) == std::vector<int>{1});
}

TEST_CASE("Ramsey traces") {
    const std::vector<double> waits{0, 5, 10, 20, 40};
    const auto flat = ramsey_trace(Spin::N1, waits, 0.0, 200, 1);
    for (double v : flat.p_up) CHECK(v == 1.0);

    const double sigma = sigma_from_t2_star(20.0);
    CHECK(sigma == doctest::Approx(0.01125).epsilon(1e-3));
    CHECK(t2_star_from_sigma(sigma) == doctest::Approx(20.0));

    const int n = 20000;
    const auto tr = ramsey_trace(Spin::E1, waits, sigma, n, 5, 4);
    CHECK(tr.envelope[3] == doctest::Approx(0.5 * (1 + std::exp(-1.0))));
    for (std::size_t i = 0; i < waits.size(); ++i) {
        const double want = 0.5 * (1 + std::exp(-std::pow(two_pi * sigma * waits[i], 2) / 2));
        CHECK(std::abs(tr.p_up[i] - want) < 3 / std::sqrt(double(n)));
    }
    // seeded and scheduling independent
    const auto again = ramsey_trace(Spin::E1, waits, sigma, n, 5, 1);
    CHECK(again.p_up == tr.p_up);
}
