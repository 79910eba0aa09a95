// donorsim command line: run / validate / list-experiments

#include <iostream>

#include <CLI11.hpp>

#include "donorsim/experiments.hpp"

using namespace donorsim;

namespace {
constexpr int exit_config = 2, exit_runtime = 3;

int report_config_error(const ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& i : e.issues) std::cerr << "  " << i << "\n";
    return exit_config;
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-donor four-spin simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;

    auto* run = app.add_subcommand("run", "run one experiment config");
    run->add_option("--config", config_path, "JSON config")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--workers", workers, "override the worker count")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("--config", config_path, "JSON config")->required();

    auto* list = app.add_subcommand("list-experiments", "print the experiment names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    if (list->parsed()) {
        for (const auto& n : experiment_names()) std::cout << n << "\n";
        return 0;
    }
    try {
        json doc;
        {
            std::ifstream in(config_path);
            if (!in) throw ConfigError({"$: cannot open config file '" + config_path + "'"});
            try {
                doc = json::parse(in);
            } catch (const json::parse_error& e) {
                throw ConfigError({std::string("$: invalid JSON: ") + e.what()});
            }
        }
        // CLI overrides are part of the hashed config
        if (run->parsed() && seed && doc.is_object()) doc["seed"] = *seed;
        if (run->parsed() && workers && doc.is_object()) doc["workers"] = *workers;
        const ExperimentConfig cfg = parse_config(doc);
        if (validate->parsed()) {
            std::cout << "ok " << cfg.experiment << " " << config_hash(cfg) << "\n";
            return 0;
        }
        const RunManifest m = run_experiment(cfg, out_dir);
        std::cout << "wrote " << m.outputs.size() << " outputs to " << out_dir << " (config " << m.config_hash.substr(0, 12)
                  << ", " << m.wall_time_s << " s)\n";
        for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
        return 0;
    } catch (const ConfigError& e) {
        return report_config_error(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}
