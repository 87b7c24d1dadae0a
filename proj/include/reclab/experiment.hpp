#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace reclab {

/// A validated experiment description. `resolved` is the input with every
/// default filled in; runs read their parameters from it.
struct ExperimentConfig {
    std::string experiment;
    std::string name;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string output_dir = ".";
    nlohmann::json resolved;
};

const std::vector<std::string>& experiment_names();

/// Throws ConfigError for missing, unknown or malformed keys.
ExperimentConfig parse_config(const nlohmann::json& config);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunReport {
    std::filesystem::path data;
    std::filesystem::path summary;
    std::filesystem::path plot;
    /// Empty when the experiment has no reference to compare against.
    std::optional<bool> pass;
    double statistic = 0.0;
};

/// Runs one experiment and writes `<name>.data.csv`, `<name>.summary.json`
/// and `<name>.plot.csv`. On failure no output file is left behind.
RunReport run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// 17 significant digits; NaN prints as "nan".
std::string format_number(double x);

}  // namespace reclab
