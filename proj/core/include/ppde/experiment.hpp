#pragma once

#include "ppde/domains.hpp"
#include "ppde/generators.hpp"
#include "ppde/lattice.hpp"
#include "ppde/paths.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// One experiment = one JSON document. Schema-checked on parse; stochastic
/// experiment kinds require a seed.
struct ExperimentConfig {
    std::string kind;
    nlohmann::json raw;
    std::optional<std::uint64_t> seed;

    static ExperimentConfig parse(const std::string& text, const std::string& origin);
    static ExperimentConfig parse_file(const std::filesystem::path& file);

    std::uint64_t config_hash() const;
};

struct RunOutcome {
    std::vector<std::string> artifacts;  // file names inside the output directory
    nlohmann::json key_values;           // scalar outputs, recorded in the manifest
};

/// Runs the experiment and writes artifacts plus a manifest
/// (config hash, seed, artifact list, key values) into out_dir. Reruns with
/// the same config and seed are bit-identical.
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                          std::optional<std::uint64_t> seed_override, int jobs);

/// Tabular diff of two manifests of the same experiment kind. Keys prefixed
/// "mc_" compare within 3 combined standard errors; everything else must
/// match exactly.
nlohmann::json compare_runs(const std::filesystem::path& manifest_a,
                            const std::filesystem::path& manifest_b);

/// Config block readers shared with the CLI and the tests.
ConvexDomain domain_from_config(const nlohmann::json& block);
GeneratorSpec generator_from_config(const nlohmann::json& block);
ReducedPayoff payoff_from_config(const nlohmann::json& block);
PiecewisePath history_from_config(const nlohmann::json& block);

}  // namespace ppde
