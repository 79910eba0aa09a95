#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "donorsim/spin_model.hpp"

namespace donorsim {

enum class Channel { ESR, NMR };
enum class Mode { GATE_MODEL, FULL_DYNAMICS };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

// Target spin plus required bits of (some of) the spectators; -1 = any.
struct TransitionLabel {
    Spin target = Spin::E1;
    std::array<int, 4> condition{-1, -1, -1, -1};
};

struct PulseSpec {
    Channel channel = Channel::ESR;
    double carrier_frequency = 0;  // MHz, signed: E(up) − E(down) of the addressed line
    double detuning = 0;           // MHz; drive frequency = carrier + detuning
    double phase = 0;              // rad
    double rabi_frequency = 0;     // MHz
    double duration = 0;           // µs
    std::optional<TransitionLabel> transition;
    // normalized matrix element of the labeled line; the bare drive is rabi/coupling
    double coupling = 1.0;

    void validate() const;
    double drive_frequency() const { return carrier_frequency + detuning; }
};

struct PIRSModel {
    double shift_amplitude = 120.0;  // kHz
    double time_constant = 1.2;      // µs
    bool enabled = false;
    double accumulated_state = 0;    // kHz

    void validate() const;
};

struct NoiseModel {
    std::array<double, 4> sigma_f{0, 0, 0, 0};  // MHz, per spin (n1, n2, e1, e2)
    double p_up = 0;                            // per-electron spin-up load probability
    double p_up_nuclear = 0;                    // nuclear initialization error

    void validate() const;
};

struct DriveSettings {
    double esr_rabi = 0.5;    // MHz
    double nmr_rabi = 0.01;   // MHz
    double gate_selectivity_window = 2.0;  // MHz
};

struct ShotRecord {
    std::int64_t shot_index = 0;
    std::vector<Spin> spins;
    std::vector<int> outcomes;  // basis bits: 0 = ⇑, 1 = ⇓
    std::uint64_t rng_stream_id = 0;
};

// PIRS shift after time t starting from model.accumulated_state.
double pirs_detuning(double t, const PIRSModel& model, bool drive_active);
// Mean of the shift over [0, t] (used for piecewise-constant integration).
double pirs_mean_detuning(double t, const PIRSModel& model, bool drive_active);

// Everything derived once from the physical parameters.
class Device {
public:
    explicit Device(const SystemParams& p, DriveSettings drive = {});

    const SystemParams& params() const { return params_; }
    const DriveSettings& drive() const { return drive_; }
    const cmat& static_hamiltonian() const { return h_static_; }
    const cmat& dynamics_hamiltonian() const { return h_dyn_; }
    const rvec& reference_energies() const { return h_ref_; }
    const EigenStructure& eigen() const { return eig_; }
    const std::vector<TransitionLine>& esr_lines() const { return esr_; }
    double electron_zeeman() const { return params_.electron_zeeman(); }

    struct Resolved {
        double carrier = 0;
        double coupling = 1;
        int down_index = 0, up_index = 0;
    };
    // unspecified spectator bits default to down
    Resolved resolve(const TransitionLabel& label) const;

    // labeled pulse whose rotation angle is θ = 2π·rabi·duration on the addressed line
    PulseSpec labeled_pulse(Channel ch, const TransitionLabel& label, double theta, double phase,
                            double rabi = 0) const;

    const std::vector<TransitionLine>& nmr_lines() const { return nmr_; }
    // absolute ESR line frequencies per nuclear configuration 2·n1 + n2
    const std::vector<double>& block_lines(int nuclear_config) const { return block_lines_[nuclear_config]; }

private:
    SystemParams params_;
    DriveSettings drive_;
    cmat h_static_, h_dyn_;
    rvec h_ref_;
    EigenStructure eig_;
    std::vector<TransitionLine> esr_, nmr_;
    std::array<std::vector<double>, 4> block_lines_;
};

// H − f·F + (Ω/c)(cosφ ΣSx + sinφ ΣSy) for the driven species (F = ΣSz).
cmat rotating_frame_hamiltonian(const cmat& h, const cmat& f_op, const cmat& sx, const cmat& sy,
                                const PulseSpec& pulse);
cmat rotating_frame_hamiltonian(const cmat& h_static, const PulseSpec& pulse);

// True when the Rabi rate exceeds a quarter of the nearest unintended line spacing.
bool selectivity_warning(const Device& dev, const PulseSpec& pulse);

struct Perturbation {
    std::array<double, 4> delta{0, 0, 0, 0};  // quasi-static detuning per spin, MHz
    double esr_shift = 0;                     // PIRS resonance shift, MHz
};

// Propagator in the reference frame for a pulse applied over [t0, t0 + duration].
cmat pulse_unitary(const Device& dev, const PulseSpec& pulse, Mode mode, double t0,
                   const Perturbation& pert = {});
cmat idle_unitary(const Device& dev, double duration, Mode mode, double t0, const Perturbation& pert = {});

cmat apply_pulse(const Device& dev, const cmat& rho, const PulseSpec& pulse, Mode mode, double t0 = 0);

// Caches the eigensystem of a constant drive so many durations/start times are cheap.
class PulseEvolver {
public:
    PulseEvolver(const Device& dev, const PulseSpec& pulse, Mode mode, const Perturbation& pert = {});
    cmat unitary(double t0, double duration) const;

private:
    const Device* dev_;
    Mode mode_;
    bool labeled_gate_ = false;
    bool electrons_ = true;
    EigenSystem<double> eig_;
    rvec frame_;                      // diagonal of H_ref − f·F − K
    std::array<bool, 4> active_{true, true, true, true};
    // gate model, labeled: two-level Hamiltonian and the subspace pairs it acts on
    cmat h2_;
    std::vector<std::array<int, 2>> pairs_;
};

struct SequenceStep {
    enum class Kind { Pulse, Idle, Initialize, Project, Measure };
    Kind kind = Kind::Idle;
    PulseSpec pulse;
    double duration = 0;
    Spin spin = Spin::N1;
    int state = 1;
    Axis axis = Axis::Z;
    bool ideal_projection = true;

    static SequenceStep make_pulse(const PulseSpec& p);
    static SequenceStep make_idle(double t);
    static SequenceStep make_initialize(Spin s, int state);
    static SequenceStep make_project(Spin s, Axis a, bool ideal = true);
    static SequenceStep make_measure(Spin s);
};
using Sequence = std::vector<SequenceStep>;

struct RunOptions {
    int n_shots = 0;  // 0: probability mode (no RNG use, measurements dephase)
    int workers = 1;
    std::optional<cmat> initial_state;  // counts as initialized when present
};

struct RunResult {
    cmat final_state;  // ensemble average over shots
    std::vector<ShotRecord> shots;
    std::vector<std::string> warnings;
};

RunResult run_sequence(const Device& dev, const Sequence& seq, const NoiseModel& noise, const PIRSModel& pirs,
                       Mode mode, std::uint64_t seed, const RunOptions& opt = {});
RunResult run_sequence(const Sequence& seq, const SystemParams& params, const NoiseModel& noise,
                       const PIRSModel& pirs, Mode mode, std::uint64_t seed, const RunOptions& opt = {});

// Reset channel bringing one spin to `state` with the configured error probability.
cmat initialize_spin(const cmat& rho, Spin s, int state, double p_error);
// Local unitary 2x2 `u` on one spin.
cmat embed_single(Spin s, const cmat& u);
// Projection onto bit `b` of spin `s`.
cmat projector(Spin s, int b);

double geometric_phase_of_drive(double delta_f, double rabi, int n_loops);
// Two-level FULL_DYNAMICS loop from |↓⟩, drive Δf above resonance for n generalized periods;
// returns total minus dynamical phase, wrapped to (−π, π].
double simulate_geometric_phase(double delta_f, double rabi, int n_loops);

Sequence bell_prep(const Device& dev, Mode mode);
// reduced nuclear state for the named spins (n1, n2)
cmat nuclear_state(const cmat& rho16);

struct PhaseMapResult {
    std::vector<double> freqs;      // MHz, relative to the electron Zeeman frequency
    std::vector<double> durations;  // µs
    std::vector<double> p_flip;     // row-major [freq][duration]
    // per spin n2, e1, e2 after the swept pulse: up-proportions along X, Y, Z, and bloch norm
    bool with_axes = false;
    std::array<std::vector<std::array<double, 4>>, 3> axes;
    double at(std::size_t fi, std::size_t di) const { return p_flip[fi * durations.size() + di]; }
};

PhaseMapResult phase_map(const Device& dev, const std::vector<double>& freq_grid,
                         const std::vector<double>& dur_grid, Mode mode, const NoiseModel& noise,
                         bool with_axes = false, int workers = 1);

double p_flip(const std::vector<int>& shots);
double p_up(const std::vector<int>& up_flags);  // 1 = ⇑
std::vector<int> up_flags(const std::vector<ShotRecord>& shots, Spin s);
std::vector<int> outcome_bits(const std::vector<ShotRecord>& shots, Spin s);

struct RamseyTrace {
    std::vector<double> wait;
    std::vector<double> p_up;      // Monte-Carlo
    std::vector<double> envelope;  // ½(1 + exp(-(t/T2*)²))
    double t2_star = 0;
};
double t2_star_from_sigma(double sigma_f);
double sigma_from_t2_star(double t2_star);
RamseyTrace ramsey_trace(Spin s, const std::vector<double>& wait_grid, double sigma_f, int n_shots,
                         std::uint64_t seed, int workers = 1);

}  // namespace donorsim
