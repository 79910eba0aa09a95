#include <chrono>
#include <fstream>
#include <cmath>
#include <numbers>
#include <random>

#include "donorsim/experiments.hpp"
#include "donorsim/parallel.hpp"
#include "donorsim/rng.hpp"

namespace donorsim {

namespace {
constexpr double pi = std::numbers::pi;

Grid grid_of(const json& g) {
    return {g["start"].get<double>(), g["stop"].get<double>(), int(g["count"].get<std::int64_t>())};
}

double binomial_fraction(double p, int n, std::mt19937_64& rng) {
    if (n <= 0) return p;
    std::binomial_distribution<int> b(n, std::clamp(p, 0.0, 1.0));
    return double(b(rng)) / n;
}

// collects outputs and their checksums
struct Emitter {
    std::filesystem::path dir;
    std::string format;
    RunManifest& manifest;

    void text(const std::string& name, const std::string& body) {
        write_text(dir / name, body);
        manifest.outputs.push_back({name, sha256_hex(body)});
    }
    void table(const std::string& stem, const CsvTable& t) {
        if (format == "json") {
            json rows = json::array();
            for (const auto& r : t.rows) rows.push_back(r);
            text(stem + ".json", json{{"header", t.header}, {"rows", rows}}.dump(2) + "\n");
        } else {
            text(stem + ".csv", format_csv(t));
        }
    }
    void document(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
};

json fit_json(const SineFit& f) {
    return {{"amplitude", f.amplitude}, {"phase", f.phase}, {"offset", f.offset},
            {"fixed_periods", f.fixed_periods}, {"residual_rms", f.residual_rms},
            {"degenerate_phase", f.degenerate_phase}};
}

void ensure_writable(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw std::runtime_error("output directory '" + dir.string() + "' cannot be created");
    const auto probe = dir / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw std::runtime_error("output directory '" + dir.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);
}

void run_phase_map(const ExperimentConfig& cfg, const Device& dev, Emitter& out, bool full) {
    const auto freqs = grid_of(cfg.params["freq_mhz"]).values();
    const auto durs = grid_of(cfg.params["duration_us"]).values();
    const PhaseMapResult r = phase_map(dev, freqs, durs, cfg.mode, cfg.noise, full, cfg.workers);
    CsvTable t{{"freq_mhz", "duration_us", "p_flip"}, {}};
    for (std::size_t i = 0; i < freqs.size(); ++i)
        for (std::size_t k = 0; k < durs.size(); ++k) t.rows.push_back({freqs[i], durs[k], r.at(i, k)});
    out.table("phase_map", t);
    if (!full) return;
    const char* names[3] = {"n2", "e1", "e2"};
    for (int s = 0; s < 3; ++s) {
        CsvTable a{{"freq_mhz", "duration_us", "up_x", "up_y", "up_z", "bloch_norm"}, {}};
        for (std::size_t i = 0; i < freqs.size(); ++i)
            for (std::size_t k = 0; k < durs.size(); ++k) {
                const auto& v = r.axes[std::size_t(s)][i * durs.size() + k];
                a.rows.push_back({freqs[i], durs[k], v[0], v[1], v[2], v[3]});
            }
        out.table(std::string("full_phase_") + names[s], a);
    }
}

void run_bell(const ExperimentConfig& cfg, const Device& dev, Emitter& out) {
    BellSourceOptions bo;
    bo.mode = cfg.mode;
    bo.noise = cfg.noise;
    bo.pirs = cfg.pirs;
    bo.n_shots = int(cfg.params["n_shots"].get<std::int64_t>());
    bo.seed = cfg.seed;
    bo.conditional_projection = cfg.params["conditional_projection"].get<bool>();
    bo.workers = cfg.workers;
    std::optional<ProbabilityTable> exact;
    if (bo.n_shots == 0) exact = bell_probability_table(dev, bo, 0);
    TomographyOptions to;
    to.n_groups = int(cfg.params["n_groups"].get<std::int64_t>());
    to.n_resamples = int(cfg.params["n_resamples"].get<std::int64_t>());
    to.seed = stream_id(cfg.seed, 0, 0xb0075);
    to.workers = cfg.workers;
    const DensityEstimate est = tomography_pipeline(
        [&](int g) { return exact ? *exact : bell_probability_table(dev, bo, g); }, to);

    json doc = density_json(est.physical);
    doc["fidelity"] = est.fidelity;
    doc["concurrence"] = est.concurrence;
    doc["ci"] = {{"lo", est.ci_fidelity.lo}, {"hi", est.ci_fidelity.hi}};
    doc["concurrence_ci"] = {{"lo", est.ci_concurrence.lo}, {"hi", est.ci_concurrence.hi}};
    doc["raw"] = density_json(est.raw);
    out.document("density.json", doc);

    const auto& zz = est.table.get({Axis::Z, Axis::Z});
    CsvTable t{{"n1", "n2", "probability"}, {}};
    for (int o = 0; o < 4; ++o) t.rows.push_back({double(o >> 1), double(o & 1), zz[std::size_t(o)]});
    out.table("zz_probabilities", t);

    json tbl = json::object();
    const char* ax = "XYZ";
    for (int i = 0; i < n_axis_pairs; ++i) {
        const AxisPair a = axis_pair(i);
        tbl[std::string{ax[int(a.first)], ax[int(a.second)]}] = est.table.p[std::size_t(i)];
    }
    out.document("probability_table.json", tbl);
    for (const auto& w : est.warnings) out.manifest.warnings.push_back(w);
}

void run_pirs(const ExperimentConfig& cfg, const Device& dev, Emitter& out) {
    const auto rot = grid_of(cfg.params["rotation_pi"]).values();
    PIRSModel drift = cfg.pirs;
    const PirsCzCurve c = pirs_cz_curve(dev, rot, cfg.mode, drift, cfg.workers);
    CsvTable t{{"rotation_pi", "duration_us", "p_flip_no_drift", "p_flip_drift", "deviation"}, {}};
    for (std::size_t i = 0; i < rot.size(); ++i)
        t.rows.push_back({c.rotation_pi[i], c.duration_us[i], c.no_drift[i], c.drift[i],
                          std::abs(c.drift[i] - c.no_drift[i])});
    out.table("pirs_cz", t);
}

void run_rabi(const ExperimentConfig& cfg, Emitter& out) {
    const double p = cfg.params["p_up"].get<double>();
    const double rabi = cfg.params["rabi_mhz"].get<double>();
    const int shots = int(cfg.params["n_shots"].get<std::int64_t>());
    const auto t = grid_of(cfg.params["duration_us"]).values();
    const auto model = neutral_rabi_forward(p, t, rabi, -1, cfg.system);
    std::vector<double> meas(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto rng = make_stream(cfg.seed, i, 0x5a4d);
        meas[i] = binomial_fraction(model[i], shots, rng);
    }
    RabiFitOptions fo;
    fo.rabi_guess = rabi;
    fo.fit_rabi = cfg.params["fit_rabi"].get<bool>();
    const RabiFit f = fit_p_up(t, meas, fo, cfg.system);
    const auto fitted = neutral_rabi_forward(f.p_up, t, f.rabi, -1, cfg.system);
    CsvTable tab{{"duration_us", "p_up_model", "p_up_measured", "p_up_fit"}, {}};
    for (std::size_t i = 0; i < t.size(); ++i) tab.rows.push_back({t[i], model[i], meas[i], fitted[i]});
    out.table("rabi_spam", tab);
    out.document("rabi_fit.json", {{"p_up_true", p}, {"p_up_fit", f.p_up}, {"rabi_mhz", f.rabi},
                                   {"residual_rms", f.residual_rms}, {"n_shots", shots}});
}

void run_reversal(const ExperimentConfig& cfg, const Device& dev, Emitter& out) {
    const PhaseReversalReport r = phase_reversal_report(
        dev, cfg.params["p_up"].get<double>(), int(cfg.params["count"].get<std::int64_t>()),
        cfg.params["data_phase_offset"].get<double>(), cfg.params["data_amplitude_ratio"].get<double>(),
        int(cfg.params["n_shots"].get<std::int64_t>()), cfg.seed, cfg.mode, cfg.workers);
    CsvTable t{{"phi", "p_ideal", "p_sim", "p_data"}, {}};
    for (std::size_t i = 0; i < r.phi.size(); ++i) t.rows.push_back({r.phi[i], r.ideal[i], r.sim[i], r.data[i]});
    out.table("phase_reversal", t);
    out.document("phase_reversal_fit.json",
                 {{"ideal", fit_json(r.ideal_fit)},
                  {"simulation", fit_json(r.sim_fit)},
                  {"data", fit_json(r.data_fit)},
                  {"comparison",
                   {{"phase_offset", r.comparison.phase_offset}, {"amplitude_ratio", r.comparison.amplitude_ratio}}}});
    if (r.sim_fit.degenerate_phase) out.manifest.warnings.push_back("phase reversal: simulated amplitude below 0.01");
}

void run_ramsey(const ExperimentConfig& cfg, Emitter& out) {
    const int shots = int(cfg.params["n_shots"].get<std::int64_t>());
    const int count = int(cfg.params["count"].get<std::int64_t>());
    const double span = cfg.params["max_wait_t2"].get<double>();
    const json& traces = cfg.params["traces"];
    json summary = json::array();
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const json& tr = traces[k];
        const double t2 = tr["t2_star_us"].get<double>();
        const Spin s = spin_from_name(tr["spin"].get<std::string>());
        const auto waits = Grid{0, span * t2, count}.values();
        const RamseyTrace rt = ramsey_trace(s, waits, sigma_from_t2_star(t2), shots, stream_id(cfg.seed, k, 0x7a),
                                            cfg.workers);
        CsvTable t{{"wait_us", "p_up"}, {}};
        for (std::size_t i = 0; i < waits.size(); ++i) t.rows.push_back({waits[i], rt.p_up[i]});
        const std::string label = tr["label"].get<std::string>();
        out.table("ramsey_" + label, t);
        summary.push_back({{"label", label}, {"spin", spin_name(s)}, {"t2_star_us", t2},
                           {"sigma_f_mhz", sigma_from_t2_star(t2)}});
    }
    out.document("ramsey_summary.json", summary);
}

void run_distance(const ExperimentConfig& cfg, Emitter& out) {
    std::string path = cfg.params["data"].get<std::string>();
    if (path.empty()) path = std::string(DONORSIM_DATA_DIR) + "/donor_distance_example.csv";
    const auto [d, j] = load_distance_dataset(path);
    const double target = cfg.params["target_j_mhz"].get<double>();
    const DonorDistanceFit f = donor_distance_fit(d, j, target);
    out.document("donor_distance.json", {{"distance_nm", f.distance_nm}, {"slope_per_nm", f.slope},
                                         {"intercept", f.intercept}, {"residual_rms", f.residual_rms},
                                         {"target_j_mhz", target}, {"n_points", d.size()}});
}

}  // namespace

PhaseMapLandmarks phase_map_landmarks(const Device& dev) {
    PhaseMapLandmarks m;
    bool cz = false, dd = false;
    const int cz_from = basis_index(1, 0, 1, 1), dd_from = basis_index(1, 1, 1, 1);
    for (const auto& l : dev.esr_lines()) {
        if (!cz && l.channel == LineChannel::Electron1 && l.from_index == cz_from) {
            m.cz_offset = l.frequency - dev.electron_zeeman();
            m.cz_amplitude = l.amplitude;
            cz = true;
        }
        if (!dd && l.from_index == dd_from) {
            m.dd_offset = l.frequency - dev.electron_zeeman();
            m.dd_amplitude = l.amplitude;
            dd = true;
        }
    }
    if (!cz || !dd) throw ContractViolation("phase_map_landmarks: expected ESR lines not found");
    return m;
}

double rotation_duration(const Device& dev, double theta, double amplitude) {
    require(amplitude > 0, "rotation_duration: amplitude must be positive");
    return theta / (two_pi * dev.drive().esr_rabi * amplitude);
}

double PirsCzCurve::max_deviation() const {
    double m = 0;
    for (std::size_t i = 0; i < drift.size(); ++i) m = std::max(m, std::abs(drift[i] - no_drift[i]));
    return m;
}

PirsCzCurve pirs_cz_curve(const Device& dev, const std::vector<double>& rotation_pi, Mode mode,
                          const PIRSModel& drift_model, int workers) {
    PirsCzCurve c;
    c.rotation_pi = rotation_pi;
    c.duration_us.resize(rotation_pi.size());
    c.no_drift.resize(rotation_pi.size());
    c.drift.resize(rotation_pi.size());
    const TransitionLabel n2{Spin::N2, {-1, -1, -1, 1}};
    const TransitionLabel cz{Spin::E1, {1, 0, -1, 1}};
    const PulseSpec half = dev.labeled_pulse(Channel::NMR, n2, pi / 2, -pi / 2);
    PIRSModel off = drift_model;
    off.enabled = false;
    off.accumulated_state = 0;
    // drive calibrated at the saturated resonance; the shift relaxes during the ESR pulse
    PIRSModel on = drift_model;
    on.enabled = true;
    on.accumulated_state = drift_model.shift_amplitude;
    const cmat up = projector(Spin::N2, 0);

    parallel_for(rotation_pi.size(), workers, [&](std::size_t i) {
        const double theta = rotation_pi[i] * pi;
        for (int variant = 0; variant < 2; ++variant) {
            PulseSpec esr = dev.labeled_pulse(Channel::ESR, cz, theta, 0.0);
            if (variant) esr.detuning = -drift_model.shift_amplitude * 1e-3;
            Sequence seq;
            for (Spin s : {Spin::N1, Spin::N2, Spin::E1, Spin::E2}) seq.push_back(SequenceStep::make_initialize(s, 1));
            seq.push_back(SequenceStep::make_pulse(half));
            seq.push_back(SequenceStep::make_pulse(esr));
            seq.push_back(SequenceStep::make_pulse(half));
            const RunResult r = run_sequence(dev, seq, NoiseModel{}, variant ? on : off, mode, 0);
            const double p = std::clamp((up * r.final_state).trace().real(), 0.0, 1.0);
            (variant ? c.drift : c.no_drift)[i] = p;
            c.duration_us[i] = esr.duration;
        }
    });
    return c;
}

PhaseReversalReport phase_reversal_report(const Device& dev, double p_up, int count, double dphase, double ratio,
                                          int n_shots, std::uint64_t seed, Mode mode, int workers) {
    PhaseReversalReport r;
    r.phi = Grid{0, two_pi, count}.values();
    for (double f : r.phi) r.ideal.push_back(0.5 - 0.5 * std::cos(4 * f));
    r.sim = phase_reversal_curve(dev, p_up, r.phi, mode, workers);
    r.ideal_fit = sine_fit(r.phi, r.ideal);
    r.sim_fit = sine_fit(r.phi, r.sim);
    SineFit shifted = r.sim_fit;
    shifted.phase = wrap_phase(r.sim_fit.phase + dphase);
    shifted.amplitude = r.sim_fit.amplitude * ratio;
    r.data.resize(r.phi.size());
    for (std::size_t i = 0; i < r.phi.size(); ++i) {
        auto rng = make_stream(seed, i, 0x9e7);
        r.data[i] = binomial_fraction(sine_model(shifted, r.phi[i]), n_shots, rng);
    }
    r.data_fit = sine_fit(r.phi, r.data);
    r.comparison = compare_fits(r.sim_fit, r.data_fit);
    return r;
}

RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    ensure_writable(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest m;
    m.config_hash = config_hash(cfg);
    m.seed = cfg.seed;
    Emitter out{out_dir, cfg.format, m};
    const std::string& e = cfg.experiment;
    const bool needs_device = e == "phase_map" || e == "full_phase_sim" || e == "bell_tomography" ||
                              e == "pirs_cz" || e == "phase_reversal";
    if (needs_device) {
        const Device dev(cfg.system, cfg.drive);
        if (e == "phase_map") run_phase_map(cfg, dev, out, false);
        else if (e == "full_phase_sim") run_phase_map(cfg, dev, out, true);
        else if (e == "bell_tomography") run_bell(cfg, dev, out);
        else if (e == "pirs_cz") run_pirs(cfg, dev, out);
        else if (e == "phase_reversal") run_reversal(cfg, dev, out);
    }
    if (e == "rabi_spam") run_rabi(cfg, out);
    else if (e == "ramsey") run_ramsey(cfg, out);
    else if (e == "donor_distance_fit") run_distance(cfg, out);

    out.document("config.json", cfg.canonical);
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
}

}  // namespace donorsim
