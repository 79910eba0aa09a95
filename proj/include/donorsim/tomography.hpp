#pragma once

// Two-nucleus state tomography: nine axis pairs -> Stokes -> density.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "donorsim/pulse_engine.hpp"

namespace donorsim {

struct AxisPair {
    Axis first = Axis::Z, second = Axis::Z;
};
inline constexpr int n_axis_pairs = 9;
AxisPair axis_pair(int index);  // index = 3·first + second, X < Y < Z
int axis_pair_index(AxisPair p);

// Pre-measurement rotation mapping +axis onto +Z (bit 0). Z needs none.
// +X: π/2 about −Y; +Y: π/2 about +X.
std::optional<PulseSpec> projection_pulse(const Device& dev, Spin nucleus, Axis axis);

// P(00), P(01), P(10), P(11) per axis pair; bits are (n1, n2) with 0 = ⇑
struct ProbabilityTable {
    std::array<std::array<double, 4>, n_axis_pairs> p{};
    std::array<bool, n_axis_pairs> present{};

    void set(AxisPair a, const std::array<double, 4>& q);
    const std::array<double, 4>& get(AxisPair a) const;
    void validate(double tol = 1e-9) const;  // complete, in [0,1], rows sum to 1
};

// 4×4 indexed by Pauli (I, X, Y, Z) of nucleus 1 and nucleus 2; S(0,0) = 1
using StokesVector = Eigen::Matrix4d;

StokesVector stokes_from_probabilities(const ProbabilityTable& t);
StokesVector stokes_from_density(const cmat& rho);
// exact probabilities of a 4×4 density matrix for every axis pair
ProbabilityTable probabilities_from_density(const cmat& rho);

cmat density_from_stokes(const StokesVector& s);

double fidelity(const cmat& rho, const cvec& psi);
cmat spin_flip(const cmat& rho);
// eigenvalues of rho down to -slack are treated as round-off and clipped
inline constexpr double concurrence_psd_slack = 1e-3;
double concurrence(const cmat& rho);

cvec bell_psi_plus();

struct BootstrapResult {
    double lo = 0, hi = 0;        // 2.5 / 97.5 percentiles
    std::vector<double> samples;  // sorted statistic per resample
    std::vector<std::string> warnings;
};
using TableStatistic = std::function<double(const ProbabilityTable&)>;
ProbabilityTable mean_table(const std::vector<ProbabilityTable>& groups);
BootstrapResult bootstrap_ci(const std::vector<ProbabilityTable>& groups, int n_resamples,
                             const TableStatistic& statistic, std::uint64_t seed, int workers = 1);
// linear interpolation between order statistics; q in [0, 1]
double percentile(const std::vector<double>& sorted, double q);

struct DensityEstimate {
    cmat raw, physical;
    StokesVector stokes;
    ProbabilityTable table;  // mean over groups
    double fidelity = 0, concurrence = 0;
    BootstrapResult ci_fidelity, ci_concurrence;
    std::vector<std::string> warnings;
};

// group index -> probability table (one group = one block of repetitions)
using TableSource = std::function<ProbabilityTable(int group)>;

struct TomographyOptions {
    int n_groups = 5;
    int n_resamples = 1000;
    std::uint64_t seed = 0;
    int workers = 1;
    cvec target;  // empty: Ψ⁺
};

DensityEstimate tomography_pipeline(const TableSource& source, const TomographyOptions& opt = {});
// statistics from a single (mean) table
double table_fidelity(const ProbabilityTable& t, const cvec& target);
double table_concurrence(const ProbabilityTable& t);

struct BellSourceOptions {
    Mode mode = Mode::GATE_MODEL;
    NoiseModel noise;
    PIRSModel pirs;
    int n_shots = 0;  // per axis pair and group; 0 = exact probabilities
    std::uint64_t seed = 0;
    bool conditional_projection = false;  // electron-conditioned NMR projection pulses
    int workers = 1;
};
// Runs the Bell preparation followed by each axis-pair readout.
ProbabilityTable bell_probability_table(const Device& dev, const BellSourceOptions& opt, int group = 0);

}  // namespace donorsim
