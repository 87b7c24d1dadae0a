#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "reclab/error.hpp"
#include "reclab/experiment.hpp"
#include "reclab/systems.hpp"

namespace {

constexpr int kConfigFailure = 2;
constexpr int kRunFailure = 1;

int report_error(const std::exception& e) {
    std::fprintf(stderr, "reclab: %s\n", e.what());
    if (const auto* err = dynamic_cast<const reclab::Error*>(&e); err && err->code() == reclab::ErrorCode::ConfigError) {
        return kConfigFailure;
    }
    return kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrence and extreme value experiments for chaotic maps and suspension flows"};
    app.require_subcommand(1);

    std::string config_path;
    unsigned workers = 0;
    std::string out_dir;

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--workers", workers, "Worker threads; overrides the config")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory; overrides the config");

    auto* list = app.add_subcommand("list-systems", "List built-in systems with default parameters");

    auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
    validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            for (const auto& [name, params] : reclab::builtin_systems()) {
                std::printf("%-10s %s\n", name.c_str(), params.dump().c_str());
            }
            return 0;
        }
        auto config = reclab::load_config(config_path);
        if (*validate) {
            std::printf("%s\n", config.resolved.dump(2).c_str());
            return 0;
        }
        if (workers > 0) {
            config.workers = workers;
            config.resolved["workers"] = workers;
        }
        std::optional<std::filesystem::path> out;
        if (!out_dir.empty()) out = out_dir;
        const auto report = reclab::run_experiment(config, out);
        const char* verdict = !report.pass ? "n/a" : (*report.pass ? "PASS" : "FAIL");
        std::printf("%s %s statistic=%s\n", config.name.c_str(), verdict,
                    reclab::format_number(report.statistic).c_str());
        std::printf("  %s\n  %s\n  %s\n", report.data.c_str(), report.summary.c_str(), report.plot.c_str());
        return 0;
    } catch (const std::exception& e) {
        return report_error(e);
    }
}
