#pragma once

// Experiment configuration (JSON), named presets and the cross-run report.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "abmcal/framework.hpp"
#include "abmcal/stats.hpp"

namespace abmcal {

struct ExperimentConfig {
    WealthModelConfig model;
    FrameworkConfig framework;  // dynamic_fixed / het_template hold the synthetic truth
    int validation_replications = 300;
    std::uint64_t validation_seed = 12345;
};

/// Synthetic truth and Test Case 1 sizes.
ExperimentConfig default_experiment_config();

/// Keys absent from the JSON keep their defaults; unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& config);

Reference synthetic_reference(const ExperimentConfig& config);

const std::vector<std::string>& preset_names();

struct MethodSpec {
    std::string method;
    bool evaluation_only = false;
    FrameworkConfig framework;
};

/// The runs a preset consists of; `rule` overrides the generation rule where the name leaves it open.
std::vector<MethodSpec> preset_methods(const std::string& name, const ExperimentConfig& base,
                                       std::optional<GenerationRule> rule = std::nullopt);

/// Random-search method a method is compared against; empty for the baselines themselves.
std::string baseline_method(const std::string& method);

struct TrialRow {
    std::string method;
    int trial = 0;
    std::uint64_t seed = 0;
    MetricsReport report;
    double seconds = 0.0;  // wall time, never written to CSV
};

struct PresetRun {
    std::vector<TrialRow> rows;
};

/// Trial k uses seed derive_seed(seed, k). With a non-empty `out`, writes
/// out/<method>/trial_<k>/..., out/per_trial.csv and out/aggregate.csv.
PresetRun run_preset(const std::string& name, const ExperimentConfig& base, int trials, std::uint64_t seed,
                     const std::filesystem::path& out, std::optional<GenerationRule> rule = std::nullopt,
                     std::ostream* progress = nullptr);

std::string per_trial_csv(const std::vector<TrialRow>& rows, const std::vector<std::string>& stat_names);
std::string aggregate_csv(const std::vector<TrialRow>& rows, const std::vector<std::string>& stat_names);

struct WelchRow {
    std::string method;
    std::string baseline;
    std::string metric;
    double mean = 0.0;
    double baseline_mean = 0.0;
    WelchResult test;
};

struct SeriesPoint {
    int iteration = 0;
    double mean = 0.0;
    double sd = 0.0;
};

struct RunReport {
    std::vector<WelchRow> welch;
    std::vector<std::pair<std::string, std::vector<SeriesPoint>>> series;  // per method
};

/// Reads every per_trial.csv under `run_dir` (recursively) and the trail.csv
/// files next to them; writes welch.csv, series.csv and SVG plots into `run_dir`.
RunReport build_report(const std::filesystem::path& run_dir);

std::string series_svg(const std::vector<std::pair<std::string, std::vector<SeriesPoint>>>& series,
                       const std::string& title);

}  // namespace abmcal
