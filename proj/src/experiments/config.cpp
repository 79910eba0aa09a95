#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "donorsim/experiments.hpp"

namespace donorsim {

std::vector<double> Grid::values() const {
    require(count >= 1, "Grid: count must be at least 1");
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[std::size_t(i)] = count == 1 ? start : start + (stop - start) * double(i) / double(count - 1);
    return v;
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"phase_map",       "full_phase_sim", "bell_tomography",
                                                   "pirs_cz",         "rabi_spam",      "phase_reversal",
                                                   "ramsey",          "donor_distance_fit"};
    return names;
}

namespace {

json grid_json(double a, double b, int n) { return {{"start", a}, {"stop", b}, {"count", n}}; }

json ramsey_default_traces() {
    return json::array({{{"label", "ionized_n1"}, {"spin", "n1"}, {"t2_star_us", 30500.0}},
                        {{"label", "neutral_n1"}, {"spin", "n1"}, {"t2_star_us", 580.0}},
                        {{"label", "e1"}, {"spin", "e1"}, {"t2_star_us", 20.0}}});
}

json param_defaults(const std::string& exp, const SystemParams& sys, const DriveSettings& drive) {
    if (exp == "phase_map" || exp == "full_phase_sim") {
        double c = 0;
        try {
            c = phase_map_landmarks(Device(sys, drive)).center();
        } catch (const std::exception&) {
            // bad system parameters are reported separately
        }
        return {{"freq_mhz", grid_json(c - 10, c + 10, 101)}, {"duration_us", grid_json(0, 20, 101)}};
    }
    if (exp == "bell_tomography")
        return {{"n_shots", 0}, {"n_groups", 5}, {"n_resamples", 1000}, {"conditional_projection", false}};
    if (exp == "pirs_cz") return {{"rotation_pi", grid_json(0, 12, 121)}};
    if (exp == "rabi_spam")
        return {{"p_up", 0.14}, {"rabi_mhz", drive.nmr_rabi}, {"duration_us", grid_json(0, 300, 61)},
                {"n_shots", 200}, {"fit_rabi", false}};
    if (exp == "phase_reversal")
        return {{"p_up", 0.14},          {"count", 64},    {"data_phase_offset", -0.638},
                {"data_amplitude_ratio", 0.61}, {"n_shots", 5000}};
    if (exp == "ramsey")
        return {{"n_shots", 10000}, {"count", 41}, {"max_wait_t2", 2.5}, {"traces", ramsey_default_traces()}};
    if (exp == "donor_distance_fit") return {{"data", ""}, {"target_j_mhz", sys.j}};
    return json::object();
}

struct Checker {
    std::vector<std::string> issues;

    void fail(const std::string& path, const std::string& what) { issues.push_back(path + ": " + what); }

    // merge `in` over `defaults`, type-checked against the default's kind
    json merge(const json& in, const json& defaults, const std::string& path) {
        json out = defaults;
        if (in.is_null()) return out;
        if (!in.is_object()) {
            fail(path, "must be an object");
            return out;
        }
        for (const auto& [k, v] : in.items()) {
            const std::string p = path + "." + k;
            if (!defaults.contains(k)) {
                fail(p, "unknown key");
                continue;
            }
            const json& d = defaults[k];
            if (d.is_boolean()) {
                if (!v.is_boolean()) fail(p, "must be a boolean");
                else out[k] = v;
            } else if (d.is_number_integer()) {
                if (!v.is_number_integer()) fail(p, "must be an integer");
                else out[k] = v.get<std::int64_t>();
            } else if (d.is_number()) {
                if (!v.is_number()) fail(p, "must be a number");
                else out[k] = v.get<double>();
            } else if (d.is_string()) {
                if (!v.is_string()) fail(p, "must be a string");
                else out[k] = v;
            } else if (d.is_object()) {
                out[k] = merge(v, d, p);
            } else {
                out[k] = v;  // arrays are checked by the caller
            }
        }
        return out;
    }

    double positive(const json& o, const std::string& key, const std::string& path) {
        const double v = o[key].get<double>();
        if (!(v > 0) || !std::isfinite(v)) fail(path + "." + key, "must be positive");
        return v;
    }
    double in_range(const json& o, const std::string& key, const std::string& path, double lo, double hi) {
        const double v = o[key].get<double>();
        if (!(v >= lo && v <= hi))
            fail(path + "." + key, "must lie in [" + json(lo).dump() + ", " + json(hi).dump() + "]");
        return v;
    }
    Grid grid(const json& o, const std::string& key, const std::string& path, bool non_negative = false) {
        Grid g{o[key]["start"].get<double>(), o[key]["stop"].get<double>(), int(o[key]["count"].get<std::int64_t>())};
        if (g.count < 1) fail(path + "." + key + ".count", "must be at least 1");
        if (g.count > 100000) fail(path + "." + key + ".count", "must be at most 100000");
        if (!(g.stop >= g.start)) fail(path + "." + key, "stop must not be below start");
        if (non_negative && g.start < 0) fail(path + "." + key + ".start", "must be non-negative");
        return g;
    }
};

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    Checker ck;
    if (!doc.is_object()) throw ConfigError({"$: config must be a JSON object"});

    const json top_defaults = {
        {"experiment", ""},
        {"seed", 0},
        {"mode", "GATE_MODEL"},
        {"workers", 1},
        {"system",
         {{"b0", 1.0}, {"g1", 1.9985}, {"g2", 1.9985}, {"mu_b_over_h", SystemParams{}.mu_b_over_h},
          {"gamma_n", 17.23}, {"a1", 111.0}, {"a2", 113.0}, {"j", 12.0}}},
        {"noise", {{"sigma_f", json::array({0.0, 0.0, 0.0, 0.0})}, {"p_up", 0.0}, {"p_up_nuclear", 0.0}}},
        {"pirs",
         {{"shift_amplitude_khz", 120.0}, {"time_constant_us", 1.2}, {"enabled", false}, {"initial_state_khz", 0.0}}},
        {"drive", {{"esr_rabi", 0.5}, {"nmr_rabi", 0.01}, {"gate_selectivity_window_mhz", 2.0}}},
        {"params", json::object()},
        {"output", {{"format", "csv"}}}};

    json params_in = doc.contains("params") ? doc["params"] : json();
    json d = doc;
    d.erase("params");
    json full = ck.merge(d, top_defaults, "$");

    ExperimentConfig cfg;
    cfg.experiment = full["experiment"].get<std::string>();
    if (!doc.contains("experiment")) ck.fail("$.experiment", "is required");
    else if (std::find(experiment_names().begin(), experiment_names().end(), cfg.experiment) ==
             experiment_names().end())
        ck.fail("$.experiment", "unknown experiment '" + cfg.experiment + "'");

    if (full["seed"].get<std::int64_t>() < 0) ck.fail("$.seed", "must be non-negative");
    cfg.seed = std::uint64_t(full["seed"].get<std::int64_t>());
    try {
        cfg.mode = mode_from_name(full["mode"].get<std::string>());
    } catch (const ContractViolation&) {
        ck.fail("$.mode", "must be GATE_MODEL or FULL_DYNAMICS");
    }
    cfg.workers = int(full["workers"].get<std::int64_t>());
    if (cfg.workers < 1) ck.fail("$.workers", "must be at least 1");

    const json& s = full["system"];
    auto& sys = cfg.system;
    sys.b0 = ck.positive(s, "b0", "$.system");
    sys.g1 = ck.positive(s, "g1", "$.system");
    sys.g2 = ck.positive(s, "g2", "$.system");
    sys.mu_b_over_h = ck.positive(s, "mu_b_over_h", "$.system");
    sys.gamma_n = s["gamma_n"].get<double>();
    sys.a1 = ck.positive(s, "a1", "$.system");
    sys.a2 = ck.positive(s, "a2", "$.system");
    sys.j = s["j"].get<double>();
    if (sys.j < 0) ck.fail("$.system.j", "must be non-negative");
    if (sys.g1 > 0 && std::abs(sys.g1 - sys.g2) / sys.g1 >= 0.01) ck.fail("$.system.g2", "must agree with g1 within 1%");

    // sigma_f: scalar (all spins) or four per-spin values
    const json& n = full["noise"];
    const json& sf = n["sigma_f"];
    if (sf.is_number()) {
        full["noise"]["sigma_f"] = json::array({sf.get<double>(), sf.get<double>(), sf.get<double>(), sf.get<double>()});
    } else if (!(sf.is_array() && sf.size() == 4 && std::all_of(sf.begin(), sf.end(), [](const json& x) {
                     return x.is_number();
                 }))) {
        ck.fail("$.noise.sigma_f", "must be a number or an array of four numbers");
        full["noise"]["sigma_f"] = top_defaults["noise"]["sigma_f"];
    } else {
        for (auto& x : full["noise"]["sigma_f"]) x = x.get<double>();
    }
    for (int k = 0; k < 4; ++k) {
        cfg.noise.sigma_f[std::size_t(k)] = full["noise"]["sigma_f"][std::size_t(k)].get<double>();
        if (cfg.noise.sigma_f[std::size_t(k)] < 0) ck.fail("$.noise.sigma_f[" + std::to_string(k) + "]", "must be non-negative");
    }
    cfg.noise.p_up = ck.in_range(n, "p_up", "$.noise", 0, 0.5);
    cfg.noise.p_up_nuclear = ck.in_range(n, "p_up_nuclear", "$.noise", 0, 0.5);

    const json& pr = full["pirs"];
    cfg.pirs.shift_amplitude = pr["shift_amplitude_khz"].get<double>();
    if (cfg.pirs.shift_amplitude < 0) ck.fail("$.pirs.shift_amplitude_khz", "must be non-negative");
    cfg.pirs.time_constant = ck.positive(pr, "time_constant_us", "$.pirs");
    cfg.pirs.enabled = pr["enabled"].get<bool>();
    cfg.pirs.accumulated_state = pr["initial_state_khz"].get<double>();

    const json& dr = full["drive"];
    cfg.drive.esr_rabi = ck.positive(dr, "esr_rabi", "$.drive");
    cfg.drive.nmr_rabi = ck.positive(dr, "nmr_rabi", "$.drive");
    cfg.drive.gate_selectivity_window = ck.positive(dr, "gate_selectivity_window_mhz", "$.drive");

    cfg.format = full["output"]["format"].get<std::string>();
    if (cfg.format != "csv" && cfg.format != "json") ck.fail("$.output.format", "must be csv or json");

    // experiment parameters depend on the (valid) system section
    const bool sys_ok = ck.issues.empty();
    json pd = param_defaults(cfg.experiment, sys_ok ? sys : SystemParams{}, sys_ok ? cfg.drive : DriveSettings{});
    json params = ck.merge(params_in, pd, "$.params");
    const std::string pp = "$.params";
    const std::string& e = cfg.experiment;
    if (e == "phase_map" || e == "full_phase_sim") {
        ck.grid(params, "freq_mhz", pp);
        ck.grid(params, "duration_us", pp, true);
    } else if (e == "bell_tomography") {
        if (params["n_shots"].get<std::int64_t>() < 0) ck.fail(pp + ".n_shots", "must be non-negative");
        if (params["n_groups"].get<std::int64_t>() < 1) ck.fail(pp + ".n_groups", "must be at least 1");
        if (params["n_resamples"].get<std::int64_t>() < 1) ck.fail(pp + ".n_resamples", "must be at least 1");
    } else if (e == "pirs_cz") {
        ck.grid(params, "rotation_pi", pp, true);
    } else if (e == "rabi_spam") {
        ck.in_range(params, "p_up", pp, 0, 0.5);
        ck.positive(params, "rabi_mhz", pp);
        if (ck.grid(params, "duration_us", pp, true).count < 8) ck.fail(pp + ".duration_us.count", "must be at least 8");
        if (params["n_shots"].get<std::int64_t>() < 0) ck.fail(pp + ".n_shots", "must be non-negative");
    } else if (e == "phase_reversal") {
        ck.in_range(params, "p_up", pp, 0, 0.5);
        if (params["count"].get<std::int64_t>() < 12) ck.fail(pp + ".count", "must be at least 12");
        ck.positive(params, "data_amplitude_ratio", pp);
        if (params["n_shots"].get<std::int64_t>() < 0) ck.fail(pp + ".n_shots", "must be non-negative");
    } else if (e == "ramsey") {
        if (params["n_shots"].get<std::int64_t>() < 1) ck.fail(pp + ".n_shots", "must be at least 1");
        if (params["count"].get<std::int64_t>() < 1) ck.fail(pp + ".count", "must be at least 1");
        ck.positive(params, "max_wait_t2", pp);
        const json& tr = params["traces"];
        if (!tr.is_array() || tr.empty()) {
            ck.fail(pp + ".traces", "must be a non-empty array");
        } else {
            const json td = {{"label", ""}, {"spin", "n1"}, {"t2_star_us", 1.0}};
            json fixed = json::array();
            for (std::size_t i = 0; i < tr.size(); ++i) {
                const std::string p = pp + ".traces[" + std::to_string(i) + "]";
                json t = ck.merge(tr[i], td, p);
                if (tr[i].is_object() && !tr[i].contains("label")) ck.fail(p + ".label", "is required");
                const std::string label = t["label"].get<std::string>();
                if (tr[i].is_object() && tr[i].contains("label") &&
                    (label.empty() || label.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_-") != std::string::npos))
                    ck.fail(p + ".label", "must be a non-empty [a-z0-9_-] name");
                try {
                    spin_from_name(t["spin"].get<std::string>());
                } catch (const ContractViolation&) {
                    ck.fail(p + ".spin", "must be one of n1, n2, e1, e2");
                }
                ck.positive(t, "t2_star_us", p);
                fixed.push_back(t);
            }
            params["traces"] = fixed;
        }
    } else if (e == "donor_distance_fit") {
        ck.positive(params, "target_j_mhz", pp);
    }

    if (!ck.issues.empty()) throw ConfigError(ck.issues);
    full["params"] = params;
    // worker count changes scheduling only, never results
    full.erase("workers");
    cfg.params = params;
    cfg.canonical = full;
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"$: cannot open config file '" + path.string() + "'"});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("$: invalid JSON: ") + e.what()});
    }
    return parse_config(doc);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("sha256: cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(cfg.canonical.dump()); }

}  // namespace donorsim
