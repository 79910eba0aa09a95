#pragma once

// Config-driven experiment runner: JSON in, CSV/JSON + manifest out.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "donorsim/pulse_engine.hpp"
#include "donorsim/spam_calibration.hpp"
#include "donorsim/tomography.hpp"

namespace donorsim {

using json = nlohmann::json;

inline constexpr const char* artifact_version = "0.1.0";

struct Grid {
    double start = 0, stop = 0;
    int count = 1;
    std::vector<double> values() const;  // inclusive linear spacing
};

const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    Mode mode = Mode::GATE_MODEL;
    int workers = 1;
    SystemParams system;
    NoiseModel noise;
    PIRSModel pirs;
    DriveSettings drive;
    json params;          // experiment-specific, defaults filled
    std::string format = "csv";
    json canonical;       // full document with every default filled in
};

// Strict schema check; throws ConfigError listing every issue by JSON path.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
// SHA-256 of the canonical (sorted, defaults-filled) JSON, hex
std::string config_hash(const ExperimentConfig& cfg);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---- emission

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
// %.17g, LF, no trailing comma; returns the written bytes
std::string format_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);
void write_text(const std::filesystem::path& path, const std::string& text);
json density_json(const cmat& rho);

struct OutputFile {
    std::string name;
    std::string sha256;
};
struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version = artifact_version;
    std::vector<OutputFile> outputs;
    double wall_time_s = 0;
    std::vector<std::string> warnings;
    json to_json() const;
};

// Writes every output plus manifest.json into out_dir.
RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// ---- experiment kernels (shared with tests)

struct PhaseMapLandmarks {
    double cz_offset = 0, cz_amplitude = 1;  // e1 line, nuclei ⇓⇑, e2 ↓
    double dd_offset = 0, dd_amplitude = 1;  // collective line, nuclei ⇓⇓, electrons ↓↓
    double center() const { return 0.5 * (cz_offset + dd_offset); }
};
PhaseMapLandmarks phase_map_landmarks(const Device& dev);
// duration of a θ rotation on a line of given amplitude at the drive's ESR Rabi rate
double rotation_duration(const Device& dev, double theta, double amplitude);

struct PirsCzCurve {
    std::vector<double> rotation_pi, duration_us, no_drift, drift;
    double max_deviation() const;
};
PirsCzCurve pirs_cz_curve(const Device& dev, const std::vector<double>& rotation_pi, Mode mode,
                          const PIRSModel& drift_model, int workers = 1);

struct DonorDistanceFit {
    double slope = 0, intercept = 0;  // ln j = intercept + slope·d
    double distance_nm = 0;
    double residual_rms = 0;
};
DonorDistanceFit donor_distance_fit(const std::vector<double>& distance_nm, const std::vector<double>& j_mhz,
                                    double target_j_mhz, const std::vector<double>& weights = {});
std::pair<std::vector<double>, std::vector<double>> load_distance_dataset(const std::filesystem::path& path);

struct PhaseReversalReport {
    std::vector<double> phi, ideal, sim, data;
    SineFit ideal_fit, sim_fit, data_fit;
    FitComparison comparison;
};
// synthetic "data": sim curve with the given phase shift and amplitude scaling, plus
// binomial noise when n_shots > 0
PhaseReversalReport phase_reversal_report(const Device& dev, double p_up, int count, double data_phase_offset,
                                          double data_amplitude_ratio, int n_shots, std::uint64_t seed,
                                          Mode mode = Mode::GATE_MODEL, int workers = 1);

}  // namespace donorsim
