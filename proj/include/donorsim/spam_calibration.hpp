#pragma once

// Initialization-error model, P_up from a neutral nuclear Rabi trace,
// and phase-reversal tomography with fixed-frequency sine fits.

#include <string>
#include <vector>

#include "donorsim/pulse_engine.hpp"

namespace donorsim {

struct SpamParams {
    double p_up = 0;  // same for all four spins
    void validate() const;
};

// ⊗⁴ [p|up⟩⟨up| + (1−p)|down⟩⟨down|]
cmat spam_initial_density(double p_up);

// P_⇑ of the driven nucleus vs duration. detuning_when_up <= 0 picks A₂.
std::vector<double> neutral_rabi_forward(double p_up, const std::vector<double>& durations, double rabi,
                                         double detuning_when_up = -1, const SystemParams& sys = {});

struct RabiFit {
    double p_up = 0;
    double rabi = 0;
    double residual_rms = 0;
    int evaluations = 0;
};
struct RabiFitOptions {
    double rabi_guess = 0.01;                // MHz
    double detuning_when_up = -1;            // <= 0: A₂
    bool fit_rabi = false;
    std::vector<double> weights;             // optional per-point weights (e.g. 1/σ)
};
// least squares over p_up (and optionally rabi); throws FitError when LM fails
RabiFit fit_p_up(const std::vector<double>& durations, const std::vector<double>& p_up_trace,
                 const RabiFitOptions& opt = {}, const SystemParams& sys = {});

struct SineFit {
    double amplitude = 0;  // >= 0
    double phase = 0;      // (−π, π]
    double offset = 0;
    int fixed_periods = 4;
    double residual_rms = 0;
    bool degenerate_phase = false;  // amplitude < 0.01
};
// offset − amplitude·cos(k·φ − phase), k = fixed_periods
SineFit sine_fit(const std::vector<double>& phi, const std::vector<double>& y, int fixed_periods = 4,
                 const std::vector<double>& weights = {});
double sine_model(const SineFit& f, double phi);

struct FitComparison {
    double phase_offset = 0;     // data − sim, wrapped
    double amplitude_ratio = 1;  // data / sim
};
FitComparison compare_fits(const SineFit& sim, const SineFit& data);

// P(n1 = ⇑) after prepare + reversal U_R(φ, 3φ), starting from spam_initial_density(p_up)
std::vector<double> phase_reversal_curve(const Device& dev, double p_up, const std::vector<double>& phi_grid,
                                         Mode mode = Mode::GATE_MODEL, int workers = 1);

}  // namespace donorsim
