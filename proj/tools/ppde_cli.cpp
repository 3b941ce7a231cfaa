#include "ppde/experiment.hpp"
#include "ppde/util.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

int run_kind(const std::string& kind, const std::string& config_path, const std::string& out_dir,
             std::optional<std::uint64_t> seed, int jobs) {
    try {
        ppde::ExperimentConfig config = ppde::ExperimentConfig::parse_file(config_path);
        if (config.kind != kind) {
            std::cerr << "config error: config is for experiment '" << config.kind
                      << "', but the subcommand is '" << kind << "'\n";
            return kConfigError;
        }
        const ppde::RunOutcome outcome = ppde::run_experiment(config, out_dir, seed, jobs);
        std::cout << "wrote " << outcome.artifacts.size() << " artifact(s) to " << out_dir << "\n";
        for (auto it = outcome.key_values.begin(); it != outcome.key_values.end(); ++it) {
            std::cout << "  " << it.key() << " = " << it.value().dump() << "\n";
        }
        return kOk;
    } catch (const ppde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ppde::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericalError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for elliptic path-dependent PDEs"};
    app.require_subcommand(1);

    const std::vector<std::string> kinds = {"exit-time",      "frechet",       "price-uvm",
                                            "perron-sweep",   "modulus-probe", "viscosity-audit",
                                            "assumptions-check"};

    struct Common {
        std::string config;
        std::string out = "out";
        int jobs = 1;
        std::optional<std::uint64_t> seed;
    };
    std::map<std::string, Common> opts;
    for (const auto& kind : kinds) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        auto& o = opts[kind];
        sub->add_option("--config", o.config, "experiment config JSON")->required();
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--jobs", o.jobs, "worker cap for internal parallelism");
        std::uint64_t* seed_slot = nullptr;
        sub->add_option_function<std::uint64_t>(
            "--seed", [&o](const std::uint64_t& s) { o.seed = s; }, "seed override");
        (void)seed_slot;
    }

    std::string cmp_a, cmp_b;
    auto* cmp = app.add_subcommand("compare-runs", "diff two run manifests");
    cmp->add_option("manifest_a", cmp_a, "first manifest.json")->required();
    cmp->add_option("manifest_b", cmp_b, "second manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    if (cmp->parsed()) {
        try {
            const nlohmann::json diff = ppde::compare_runs(cmp_a, cmp_b);
            std::cout << diff.dump(2) << "\n";
            return kOk;
        } catch (const ppde::ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kConfigError;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kNumericalError;
        }
    }
    for (const auto& kind : kinds) {
        if (app.get_subcommand(kind)->parsed()) {
            const auto& o = opts[kind];
            return run_kind(kind, o.config, o.out, o.seed, o.jobs);
        }
    }
    std::cerr << "no subcommand\n";
    return kConfigError;
}
