#include "donorsim/pulse_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "donorsim/parallel.hpp"
#include "donorsim/rng.hpp"

namespace donorsim {

namespace {
constexpr double pi = std::numbers::pi;

int nuclear_config(int index) { return 2 * bit_of(index, Spin::N1) + bit_of(index, Spin::N2); }

bool matches(int index, const TransitionLabel& label) {
    for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2}) {
        if (s == label.target) continue;
        const int want = label.condition[position(s)];
        if (want >= 0 && bit_of(index, s) != want) return false;
    }
    return true;
}

rvec diag_real(const cmat& m) { return m.diagonal().real(); }

// noise term Σ δ_k S_z,k as a diagonal
rvec noise_diagonal(const std::array<double, 4>& delta) {
    rvec d = rvec::Zero(hilbert_dim);
    for (int i = 0; i < hilbert_dim; ++i)
        for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2})
            d(i) += delta[position(s)] * (bit_of(i, s) ? -0.5 : 0.5);
    return d;
}

cmat frame_sandwich(const rvec& frame, const EigenSystem<double>& es, double t0, double duration) {
    const cvec w1 = diagonal_phase<double>(frame, t0 + duration);
    const cvec w0 = diagonal_phase<double>(frame, t0).conjugate();
    return w1.asDiagonal() * propagator(es, duration) * w0.asDiagonal();
}
}  // namespace

const char* mode_name(Mode m) { return m == Mode::GATE_MODEL ? "GATE_MODEL" : "FULL_DYNAMICS"; }

Mode mode_from_name(const std::string& s) {
    if (s == "GATE_MODEL") return Mode::GATE_MODEL;
    if (s == "FULL_DYNAMICS") return Mode::FULL_DYNAMICS;
    throw ContractViolation("unknown simulation mode '" + s + "'");
}

void PulseSpec::validate() const {
    require(duration >= 0, "PulseSpec: duration must be non-negative");
    require(rabi_frequency >= 0, "PulseSpec: rabi_frequency must be non-negative");
    require(coupling > 0, "PulseSpec: coupling must be positive");
}

void PIRSModel::validate() const {
    require(shift_amplitude >= 0, "PIRSModel: shift_amplitude must be non-negative");
    require(time_constant > 0, "PIRSModel: time_constant must be positive");
}

void NoiseModel::validate() const {
    for (double s : sigma_f) require(s >= 0, "NoiseModel: sigma_f must be non-negative");
    require(p_up >= 0 && p_up <= 0.5, "NoiseModel: p_up must lie in [0, 0.5]");
    require(p_up_nuclear >= 0 && p_up_nuclear <= 0.5, "NoiseModel: p_up_nuclear must lie in [0, 0.5]");
}

double pirs_detuning(double t, const PIRSModel& m, bool drive_active) {
    if (!m.enabled) return 0;
    const double target = drive_active ? m.shift_amplitude : 0.0;
    return target + (m.accumulated_state - target) * std::exp(-t / m.time_constant);
}

double pirs_mean_detuning(double t, const PIRSModel& m, bool drive_active) {
    if (!m.enabled) return 0;
    if (t <= 0) return m.accumulated_state;
    const double target = drive_active ? m.shift_amplitude : 0.0;
    const double x = t / m.time_constant;
    return target + (m.accumulated_state - target) * (-std::expm1(-x)) / x;
}

// ---------------------------------------------------------------- Device

Device::Device(const SystemParams& p, DriveSettings drive) : params_(p), drive_(drive) {
    h_static_ = build_static_hamiltonian(p);
    h_dyn_ = block_diagonalize(h_static_);
    h_ref_ = diag_real(h_dyn_);
    eig_ = eigen_structure(h_dyn_);
    esr_ = transition_lines(h_dyn_, true);
    nmr_ = transition_lines(h_dyn_, false);
    for (const auto& line : esr_) block_lines_[nuclear_config(line.from_index)].push_back(line.frequency);
}

Device::Resolved Device::resolve(const TransitionLabel& label) const {
    int bits[4];
    for (int k = 0; k < 4; ++k) bits[k] = label.condition[k] < 0 ? 1 : label.condition[k];
    bits[position(label.target)] = 1;
    const int down = basis_index(bits[0], bits[1], bits[2], bits[3]);
    bits[position(label.target)] = 0;
    const int up = basis_index(bits[0], bits[1], bits[2], bits[3]);

    int a = -1, b = -1;
    for (int k = 0; k < hilbert_dim; ++k) {
        if (eig_.dominant[k] == down) a = k;
        if (eig_.dominant[k] == up) b = k;
    }
    if (a < 0 || b < 0 || a == b)
        throw ContractViolation("transition label does not map onto distinct eigenstates");
    const auto& v = eig_.eig.vectors;
    const cmat sx = species_operator(is_electron(label.target), 'X');
    const double m = 2.0 * std::abs(v.col(b).dot(sx * v.col(a)));
    Resolved r;
    r.carrier = eig_.eig.values(b) - eig_.eig.values(a);
    r.coupling = m > 1e-9 ? m : 1.0;
    r.down_index = down;
    r.up_index = up;
    return r;
}

PulseSpec Device::labeled_pulse(Channel ch, const TransitionLabel& label, double theta, double phase,
                                double rabi) const {
    require(is_electron(label.target) == (ch == Channel::ESR), "labeled_pulse: channel does not match target spin");
    PulseSpec p;
    p.channel = ch;
    p.rabi_frequency = rabi > 0 ? rabi : (ch == Channel::ESR ? drive_.esr_rabi : drive_.nmr_rabi);
    p.duration = theta / (two_pi * p.rabi_frequency);
    p.phase = phase;
    p.transition = label;
    const auto r = resolve(label);
    p.carrier_frequency = r.carrier;
    p.coupling = r.coupling;
    return p;
}

// ---------------------------------------------------------------- frames

cmat rotating_frame_hamiltonian(const cmat& h, const cmat& f_op, const cmat& sx, const cmat& sy,
                                const PulseSpec& pulse) {
    pulse.validate();
    const double drive = pulse.rabi_frequency / pulse.coupling;
    cmat out = h - pulse.drive_frequency() * f_op +
               drive * (std::cos(pulse.phase) * sx + std::sin(pulse.phase) * sy);
    return hermitize(out);
}

cmat rotating_frame_hamiltonian(const cmat& h_static, const PulseSpec& pulse) {
    const bool e = pulse.channel == Channel::ESR;
    return rotating_frame_hamiltonian(h_static, species_operator(e, 'Z'), species_operator(e, 'X'),
                                      species_operator(e, 'Y'), pulse);
}

bool selectivity_warning(const Device& dev, const PulseSpec& pulse) {
    const auto& lines = pulse.channel == Channel::ESR ? dev.esr_lines() : dev.nmr_lines();
    const double f = pulse.drive_frequency();
    double nearest = 0, gap = INFINITY;
    for (const auto& l : lines)
        if (std::abs(l.signed_frequency - f) < std::abs(nearest - f)) nearest = l.signed_frequency;
    for (const auto& l : lines) {
        const double d = std::abs(l.signed_frequency - nearest);
        if (d > 1e-6) gap = std::min(gap, d);
    }
    return pulse.rabi_frequency > 0.25 * gap;
}

// ---------------------------------------------------------------- evolution

PulseEvolver::PulseEvolver(const Device& dev, const PulseSpec& pulse, Mode mode, const Perturbation& pert)
    : dev_(&dev), mode_(mode), electrons_(pulse.channel == Channel::ESR) {
    pulse.validate();
    const double shift = electrons_ ? pert.esr_shift : 0.0;
    if (mode == Mode::GATE_MODEL && pulse.transition) {
        const auto& label = *pulse.transition;
        require(is_electron(label.target) == electrons_, "pulse channel does not match its transition label");
        labeled_gate_ = true;
        const double det = pulse.detuning + shift - pert.delta[position(label.target)];
        const double om = pulse.rabi_frequency;
        h2_ = 0.5 * (-det * pauli('Z') + om * (std::cos(pulse.phase) * pauli('X') + std::sin(pulse.phase) * pauli('Y')));
        for (int i = 0; i < hilbert_dim; ++i)
            if (bit_of(i, label.target) == 0 && matches(i, label))
                pairs_.push_back({i, i | (1 << (n_spins - 1 - position(label.target)))});
        frame_ = noise_diagonal(pert.delta);
        eig_ = hermitian_eig(h2_);
        return;
    }
    if (mode == Mode::GATE_MODEL && !electrons_)
        throw ContractViolation("unknown transition label: NMR pulses need a labeled transition in GATE_MODEL");

    const SystemParams& p = dev.params();
    const cmat fz = species_operator(electrons_, 'Z');
    const cmat k = electrons_ ? cmat(p.nuclear_zeeman() * species_operator(false, 'Z'))
                               : cmat(dev.electron_zeeman() * species_operator(true, 'Z'));
    cmat h = dev.dynamics_hamiltonian() - k;
    h.diagonal() += noise_diagonal(pert.delta).cast<cplx>();
    h -= shift * fz;
    eig_ = hermitian_eig(rotating_frame_hamiltonian(h, fz, species_operator(electrons_, 'X'),
                                                    species_operator(electrons_, 'Y'), pulse));
    frame_ = dev.reference_energies() - pulse.drive_frequency() * diag_real(fz) - diag_real(k);

    if (mode == Mode::GATE_MODEL) {
        const double f = pulse.drive_frequency();
        for (int b = 0; b < 4; ++b) {
            double best = INFINITY;
            for (double line : dev.block_lines(b)) best = std::min(best, std::abs(line - f));
            active_[b] = best <= dev.drive().gate_selectivity_window;
        }
    }
}

cmat PulseEvolver::unitary(double t0, double duration) const {
    require(duration >= 0, "pulse duration must be non-negative");
    if (labeled_gate_) {
        // outside the addressed pairs only the noise phases act
        cmat u = diagonal_phase<double>(frame_, duration).conjugate().asDiagonal();
        const cmat r = propagator(eig_, duration);
        for (const auto& [i, j] : pairs_) {
            // the target's own detuning is already in h2; keep the spectator part
            const cplx z = std::polar(1.0, -pi * (frame_(i) + frame_(j)) * duration);
            u(i, i) = z * r(0, 0);
            u(i, j) = z * r(0, 1);
            u(j, i) = z * r(1, 0);
            u(j, j) = z * r(1, 1);
        }
        return u;
    }
    cmat u = frame_sandwich(frame_, eig_, t0, duration);
    if (mode_ == Mode::GATE_MODEL) {
        for (int i = 0; i < hilbert_dim; ++i)
            for (int k = 0; k < hilbert_dim; ++k) {
                const bool ai = active_[nuclear_config(i)], ak = active_[nuclear_config(k)];
                if (ai && ak) continue;
                u(i, k) = (!ai && !ak && i == k) ? cplx(1) : cplx(0);
            }
    }
    return u;
}

cmat pulse_unitary(const Device& dev, const PulseSpec& pulse, Mode mode, double t0, const Perturbation& pert) {
    return PulseEvolver(dev, pulse, mode, pert).unitary(t0, pulse.duration);
}

cmat idle_unitary(const Device& dev, double duration, Mode mode, double t0, const Perturbation& pert) {
    require(duration >= 0, "idle duration must be non-negative");
    const rvec nd = noise_diagonal(pert.delta);
    if (mode == Mode::GATE_MODEL) return diagonal_phase<double>(nd, duration).conjugate().asDiagonal();
    const SystemParams& p = dev.params();
    const cmat k = p.nuclear_zeeman() * species_operator(false, 'Z') + dev.electron_zeeman() * species_operator(true, 'Z');
    cmat h = dev.dynamics_hamiltonian() - k;
    h.diagonal() += nd.cast<cplx>();
    const rvec frame = dev.reference_energies() - diag_real(k);
    return frame_sandwich(frame, hermitian_eig(h), t0, duration);
}

cmat apply_pulse(const Device& dev, const cmat& rho, const PulseSpec& pulse, Mode mode, double t0) {
    const cmat u = pulse_unitary(dev, pulse, mode, t0);
    return u * rho * u.adjoint();
}

// ---------------------------------------------------------------- channels

cmat embed_single(Spin s, const cmat& u) {
    require(u.rows() == 2 && u.cols() == 2, "embed_single: expects a 2x2 operator");
    cmat m = cmat::Identity(1, 1);
    for (int k = 0; k < n_spins; ++k) m = tensor(m, k == position(s) ? u : pauli('I'));
    return m;
}

cmat projector(Spin s, int b) {
    cmat p = cmat::Zero(2, 2);
    p(b, b) = 1;
    return embed_single(s, p);
}

cmat initialize_spin(const cmat& rho, Spin s, int state, double p_error) {
    require(state == 0 || state == 1, "initialize: state must be 0 (up) or 1 (down)");
    require(p_error >= 0 && p_error <= 1, "initialize: error probability out of range");
    cmat out = cmat::Zero(rho.rows(), rho.cols());
    for (int t = 0; t < 2; ++t) {
        const double pt = t == state ? 1.0 - p_error : p_error;
        if (pt == 0) continue;
        for (int from = 0; from < 2; ++from) {
            cmat k = cmat::Zero(2, 2);
            k(t, from) = std::sqrt(pt);
            const cmat kk = embed_single(s, k);
            out += kk * rho * kk.adjoint();
        }
    }
    return out;
}

SequenceStep SequenceStep::make_pulse(const PulseSpec& p) {
    SequenceStep s;
    s.kind = Kind::Pulse;
    s.pulse = p;
    return s;
}
SequenceStep SequenceStep::make_idle(double t) {
    SequenceStep s;
    s.kind = Kind::Idle;
    s.duration = t;
    return s;
}
SequenceStep SequenceStep::make_initialize(Spin sp, int state) {
    SequenceStep s;
    s.kind = Kind::Initialize;
    s.spin = sp;
    s.state = state;
    return s;
}
SequenceStep SequenceStep::make_project(Spin sp, Axis a, bool ideal) {
    SequenceStep s;
    s.kind = Kind::Project;
    s.spin = sp;
    s.axis = a;
    s.ideal_projection = ideal;
    return s;
}
SequenceStep SequenceStep::make_measure(Spin sp) {
    SequenceStep s;
    s.kind = Kind::Measure;
    s.spin = sp;
    return s;
}

// ---------------------------------------------------------------- sequences

namespace {

struct Runner {
    const Device& dev;
    const NoiseModel& noise;
    const PIRSModel& pirs;
    Mode mode;
    const RunOptions& opt;

    static constexpr int pirs_slices_per_tau = 20;

    void unitary_step(cmat& rho, const cmat& u) const { rho = u * rho * u.adjoint(); }

    void pulse(cmat& rho, const PulseSpec& p, double& t, PIRSModel& ps, const Perturbation& base) const {
        if (p.channel == Channel::ESR && ps.enabled && p.duration > 0) {
            const double dt_max = ps.time_constant / pirs_slices_per_tau;
            const int n = std::max(1, int(std::ceil(p.duration / dt_max)));
            const double dt = p.duration / n;
            PulseSpec slice = p;
            slice.duration = dt;
            for (int k = 0; k < n; ++k) {
                Perturbation pt = base;
                pt.esr_shift = pirs_mean_detuning(dt, ps, false) * 1e-3;
                unitary_step(rho, pulse_unitary(dev, slice, mode, t, pt));
                ps.accumulated_state = pirs_detuning(dt, ps, false);
                t += dt;
            }
            return;
        }
        Perturbation pt = base;
        if (p.channel == Channel::ESR) pt.esr_shift = ps.accumulated_state * 1e-3;
        unitary_step(rho, pulse_unitary(dev, p, mode, t, pt));
        ps.accumulated_state = pirs_detuning(p.duration, ps, p.channel == Channel::NMR);
        t += p.duration;
    }

    struct State {
        cmat rho;
        bool initialized = false;
        PIRSModel ps;
        double t = 0;
    };

    State start() const {
        return {opt.initial_state ? *opt.initial_state
                                  : cmat(cmat::Identity(hilbert_dim, hilbert_dim) / double(hilbert_dim)),
                opt.initial_state.has_value(), pirs, 0.0};
    }

    cmat execute(const Sequence& seq, const Perturbation& pert, std::mt19937_64* rng, ShotRecord* rec) const {
        State st = start();
        advance(st, seq, 0, seq.size(), pert, rng, rec);
        return st.rho;
    }

    void advance(State& st, const Sequence& seq, std::size_t from, std::size_t to, const Perturbation& pert,
                 std::mt19937_64* rng, ShotRecord* rec) const {
        cmat& rho = st.rho;
        bool& initialized = st.initialized;
        PIRSModel& ps = st.ps;
        double& t = st.t;
        for (std::size_t k = from; k < to; ++k) {
            const auto& step = seq[k];
            switch (step.kind) {
                case SequenceStep::Kind::Pulse: pulse(rho, step.pulse, t, ps, pert); break;
                case SequenceStep::Kind::Idle:
                    unitary_step(rho, idle_unitary(dev, step.duration, mode, t, pert));
                    ps.accumulated_state = pirs_detuning(step.duration, ps, false);
                    t += step.duration;
                    break;
                case SequenceStep::Kind::Initialize:
                    rho = initialize_spin(rho, step.spin, step.state,
                                          is_electron(step.spin) ? noise.p_up : noise.p_up_nuclear);
                    initialized = true;
                    break;
                case SequenceStep::Kind::Project: {
                    if (step.axis == Axis::Z) break;
                    const double phi = step.axis == Axis::X ? -pi / 2 : 0.0;
                    if (step.ideal_projection) {
                        unitary_step(rho, embed_single(step.spin, rotation(pi / 2, phi)));
                    } else {
                        require(!is_electron(step.spin), "projection pulses act on nuclei");
                        TransitionLabel l{step.spin, {-1, -1, -1, -1}};
                        l.condition[position(bound_electron(step.spin))] = 1;
                        pulse(rho, dev.labeled_pulse(Channel::NMR, l, pi / 2, phi), t, ps, pert);
                    }
                    break;
                }
                case SequenceStep::Kind::Measure: {
                    if (!initialized) throw ContractViolation("measure before any initialize");
                    const cmat p0 = projector(step.spin, 0), p1 = projector(step.spin, 1);
                    if (!rng) {
                        rho = p0 * rho * p0 + p1 * rho * p1;
                        break;
                    }
                    const double prob0 = std::clamp((p0 * rho).trace().real(), 0.0, 1.0);
                    const int b = uniform01(*rng) < prob0 ? 0 : 1;
                    const cmat& pb = b ? p1 : p0;
                    rho = pb * rho * pb / (b ? 1.0 - prob0 : prob0);
                    rec->spins.push_back(step.spin);
                    rec->outcomes.push_back(b);
                    break;
                }
            }
        }
    }
};

}  // namespace

RunResult run_sequence(const Device& dev, const Sequence& seq, const NoiseModel& noise, const PIRSModel& pirs,
                       Mode mode, std::uint64_t seed, const RunOptions& opt) {
    noise.validate();
    pirs.validate();
    require(opt.n_shots >= 0, "run_sequence: n_shots must be non-negative");
    RunResult res;
    for (const auto& s : seq) {
        if (s.kind == SequenceStep::Kind::Measure && is_electron(s.spin))
            throw ContractViolation("measure is only defined on nuclear spins");
        if (s.kind == SequenceStep::Kind::Pulse && mode == Mode::FULL_DYNAMICS && selectivity_warning(dev, s.pulse))
            res.warnings.push_back("selectivity: Rabi frequency exceeds a quarter of the nearest line spacing");
    }
    Runner run{dev, noise, pirs, mode, opt};
    if (opt.n_shots == 0) {
        if (*std::max_element(noise.sigma_f.begin(), noise.sigma_f.end()) > 0)
            res.warnings.push_back("probability mode ignores quasi-static noise");
        res.final_state = run.execute(seq, {}, nullptr, nullptr);
        return res;
    }
    const std::size_t n = std::size_t(opt.n_shots);
    std::vector<cmat> finals(n);
    res.shots.resize(n);
    // without quasi-static noise everything before the first measurement is shot independent
    const bool quiet = *std::max_element(noise.sigma_f.begin(), noise.sigma_f.end()) == 0;
    std::size_t split = 0;
    Runner::State prefix = run.start();
    if (quiet) {
        while (split < seq.size() && seq[split].kind != SequenceStep::Kind::Measure) ++split;
        run.advance(prefix, seq, 0, split, {}, nullptr, nullptr);
    }
    parallel_for(n, opt.workers, [&](std::size_t i) {
        auto rng = make_stream(seed, i);
        Perturbation pert;
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int k = 0; k < 4; ++k) pert.delta[k] = noise.sigma_f[k] > 0 ? noise.sigma_f[k] * gauss(rng) : 0.0;
        ShotRecord& rec = res.shots[i];
        rec.shot_index = std::int64_t(i);
        rec.rng_stream_id = stream_id(seed, i);
        Runner::State st = prefix;
        run.advance(st, seq, split, seq.size(), pert, &rng, &rec);
        finals[i] = std::move(st.rho);
    });
    res.final_state = cmat::Zero(hilbert_dim, hilbert_dim);
    for (const auto& f : finals) res.final_state += f;
    res.final_state /= double(n);
    return res;
}

RunResult run_sequence(const Sequence& seq, const SystemParams& params, const NoiseModel& noise,
                       const PIRSModel& pirs, Mode mode, std::uint64_t seed, const RunOptions& opt) {
    return run_sequence(Device(params), seq, noise, pirs, mode, seed, opt);
}

// ---------------------------------------------------------------- geometric phase

double geometric_phase_of_drive(double delta_f, double rabi, int n_loops) {
    require(rabi > 0, "geometric_phase_of_drive: rabi must be positive");
    return -n_loops * pi * (1.0 - std::abs(delta_f) / std::hypot(rabi, delta_f));
}

double simulate_geometric_phase(double delta_f, double rabi, int n_loops) {
    require(rabi > 0, "simulate_geometric_phase: rabi must be positive");
    const double f0 = 10.0;  // arbitrary two-level splitting
    cmat h(2, 2);
    h << cplx(f0 / 2), cplx(0), cplx(0), cplx(-f0 / 2);
    PulseSpec p;
    p.carrier_frequency = f0;
    p.detuning = delta_f;
    p.rabi_frequency = rabi;
    p.duration = n_loops / std::hypot(rabi, delta_f);
    const cmat hr = rotating_frame_hamiltonian(h, 0.5 * pauli('Z'), 0.5 * pauli('X'), 0.5 * pauli('Y'), p);
    cvec psi(2);
    psi << cplx(0), cplx(1);
    const cmat u = unitary_exp(hr, p.duration);
    const double total = std::arg(psi.dot(u * psi));
    const double energy = psi.dot(hr * psi).real();
    return wrap_phase(total + two_pi * energy * p.duration);
}

// ---------------------------------------------------------------- experiments on the engine

Sequence bell_prep(const Device& dev, Mode) {
    Sequence seq;
    for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2}) seq.push_back(SequenceStep::make_initialize(s, 1));
    TransitionLabel n1{Spin::N1, {-1, -1, 1, -1}};
    TransitionLabel n2{Spin::N2, {-1, -1, -1, 1}};
    TransitionLabel cz{Spin::E2, {1, 0, 1, -1}};
    seq.push_back(SequenceStep::make_pulse(dev.labeled_pulse(Channel::NMR, n1, pi / 2, -pi / 2)));
    seq.push_back(SequenceStep::make_pulse(dev.labeled_pulse(Channel::NMR, n2, pi / 2, pi / 2)));
    seq.push_back(SequenceStep::make_pulse(dev.labeled_pulse(Channel::ESR, cz, 2 * pi, 0.0)));
    seq.push_back(SequenceStep::make_pulse(dev.labeled_pulse(Channel::NMR, n1, pi / 2, -pi / 2)));
    return seq;
}

cmat nuclear_state(const cmat& rho16) { return partial_trace(rho16, 0b0011u, n_spins); }

PhaseMapResult phase_map(const Device& dev, const std::vector<double>& freq_grid, const std::vector<double>& dur_grid,
                         Mode mode, const NoiseModel& noise, bool with_axes, int workers) {
    require(!freq_grid.empty() && !dur_grid.empty(), "phase_map: grids must be non-empty");
    noise.validate();
    PhaseMapResult out;
    out.freqs = freq_grid;
    out.durations = dur_grid;
    out.with_axes = with_axes;
    const std::size_t nf = freq_grid.size(), nd = dur_grid.size();
    out.p_flip.assign(nf * nd, 0.0);
    if (with_axes)
        for (auto& a : out.axes) a.assign(nf * nd, {0, 0, 0, 0});

    cmat rho = cmat::Identity(hilbert_dim, hilbert_dim) / double(hilbert_dim);
    for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2})
        rho = initialize_spin(rho, s, 1, is_electron(s) ? noise.p_up : noise.p_up_nuclear);
    const TransitionLabel n2{Spin::N2, {-1, -1, -1, 1}};
    const PulseSpec half = dev.labeled_pulse(Channel::NMR, n2, pi / 2, -pi / 2);
    const PulseEvolver nmr(dev, half, mode);
    const cmat u1 = nmr.unitary(0.0, half.duration);
    const cmat rho1 = u1 * rho * u1.adjoint();
    const cmat up_n2 = projector(Spin::N2, 0);
    const double t1 = half.duration;

    parallel_for(nf, workers, [&](std::size_t fi) {
        PulseSpec esr;
        esr.channel = Channel::ESR;
        esr.carrier_frequency = dev.electron_zeeman() + freq_grid[fi];
        esr.rabi_frequency = dev.drive().esr_rabi;
        const PulseEvolver ev(dev, esr, mode);
        for (std::size_t di = 0; di < nd; ++di) {
            const double d = dur_grid[di];
            const cmat u = ev.unitary(t1, d);
            const cmat rho2 = u * rho1 * u.adjoint();
            if (with_axes) {
                const Spin spins[3] = {Spin::N2, Spin::E1, Spin::E2};
                for (int k = 0; k < 3; ++k) {
                    const auto b = bloch_vector(rho2, spins[k]);
                    out.axes[k][fi * nd + di] = {0.5 * (1 + b[0]), 0.5 * (1 + b[1]), 0.5 * (1 + b[2]),
                                                 std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])};
                }
            }
            const cmat u3 = nmr.unitary(t1 + d, half.duration);
            const cmat rho3 = u3 * rho2 * u3.adjoint();
            out.p_flip[fi * nd + di] = std::clamp((up_n2 * rho3).trace().real(), 0.0, 1.0);
        }
    });
    return out;
}

// ---------------------------------------------------------------- estimators

double p_flip(const std::vector<int>& shots) {
    if (shots.size() < 2) throw ContractViolation("p_flip: needs at least two shots");
    std::size_t flips = 0;
    for (std::size_t i = 1; i < shots.size(); ++i) flips += shots[i] != shots[i - 1];
    return double(flips) / double(shots.size() - 1);
}

double p_up(const std::vector<int>& up) {
    if (up.empty()) throw ContractViolation("p_up: needs at least one shot");
    std::size_t n = 0;
    for (int v : up) n += v == 1;
    return double(n) / double(up.size());
}

std::vector<int> outcome_bits(const std::vector<ShotRecord>& shots, Spin s) {
    std::vector<int> out;
    for (const auto& r : shots)
        for (std::size_t k = 0; k < r.spins.size(); ++k)
            if (r.spins[k] == s) out.push_back(r.outcomes[k]);
    return out;
}

std::vector<int> up_flags(const std::vector<ShotRecord>& shots, Spin s) {
    auto bits = outcome_bits(shots, s);
    for (int& b : bits) b = b == 0 ? 1 : 0;
    return bits;
}

// ---------------------------------------------------------------- Ramsey

double t2_star_from_sigma(double sigma_f) { return std::sqrt(2.0) / (two_pi * sigma_f); }
double sigma_from_t2_star(double t2_star) { return std::sqrt(2.0) / (two_pi * t2_star); }

RamseyTrace ramsey_trace(Spin s, const std::vector<double>& wait_grid, double sigma_f, int n_shots,
                         std::uint64_t seed, int workers) {
    require(sigma_f >= 0, "ramsey_trace: sigma_f must be non-negative");
    require(n_shots >= 1, "ramsey_trace: needs at least one shot per point");
    RamseyTrace tr;
    tr.wait = wait_grid;
    tr.t2_star = sigma_f > 0 ? t2_star_from_sigma(sigma_f) : INFINITY;
    tr.p_up.assign(wait_grid.size(), 0.0);
    tr.envelope.resize(wait_grid.size());
    for (std::size_t i = 0; i < wait_grid.size(); ++i) {
        const double x = sigma_f > 0 ? wait_grid[i] / tr.t2_star : 0.0;
        tr.envelope[i] = 0.5 * (1.0 + std::exp(-x * x));
    }
    const cmat half = rotation(pi / 2, 0.0);
    parallel_for(wait_grid.size(), workers, [&](std::size_t i) {
        auto rng = make_stream(seed, i, std::uint64_t(position(s)) + 1);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double t = wait_grid[i];
        require(t >= 0, "ramsey_trace: waits must be non-negative");
        long ups = 0;
        for (int k = 0; k < n_shots; ++k) {
            const double delta = sigma_f * gauss(rng);
            cmat z = cmat::Zero(2, 2);
            z(0, 0) = std::polar(1.0, -pi * delta * t);
            z(1, 1) = std::polar(1.0, pi * delta * t);
            const cvec psi = half * z * half * cvec::Unit(2, 1);
            ups += uniform01(rng) < std::norm(psi(0));
        }
        tr.p_up[i] = double(ups) / n_shots;
    });
    return tr;
}

}  // namespace donorsim
