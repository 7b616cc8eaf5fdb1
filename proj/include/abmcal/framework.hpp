#pragma once

// Alternating dynamic / heterogeneous calibration loop with an audit trail,
// best-combination selection and report metrics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "abmcal/metrics.hpp"
#include "abmcal/mixture.hpp"
#include "abmcal/regime.hpp"
#include "abmcal/surrogate.hpp"
#include "abmcal/vae.hpp"

namespace abmcal {

enum class ClusteringMode { given, parametric, nonparametric };

ClusteringMode parse_clustering_mode(std::string_view name);
std::string_view to_string(ClusteringMode mode);

enum class Phase { dynamic, heterogeneous };

std::string_view to_string(Phase phase);

/// Dynamic iff c mod (C_dyn + C_het) < C_dyn.
Phase phase_of(int c, int c_dyn, int c_het);

struct FrameworkConfig {
    int c_cal = 100;
    int c_dyn = 1;
    int c_het = 0;
    int replications = 10;  // R
    int candidates = 3;     // I
    int num_regimes = 3;    // K_dyn
    GenerationRule rule = GenerationRule::mode_selection;
    SearchStrategy search;

    ClusteringMode clustering = ClusteringMode::given;
    int het_clusters = 2;  // K_het for the parametric mixture
    double dpmm_gamma = 1.0;
    int dpmm_iterations = 100;
    VaeOptions vae;

    // Used as-is when C_dyn = 0.
    DynamicSchedule dynamic_fixed;
    // Ranges and cluster rule always; values used as-is when C_het = 0.
    HeterogeneousAssignment het_template;
    std::string dynamic_name = "wealth_income";
    std::string het_name = "wealth_consumption";

    std::uint64_t seed = 1;

    void validate() const;
};

/// Everything the loop needs from a model.
struct FrameworkModel {
    SummarySimulator simulate;
    // One run's agent trajectories, used once for clustering.
    std::function<AgentTrace(const DynamicSchedule&, const HeterogeneousAssignment&, std::uint64_t)>
        agent_traces;
    std::vector<std::string> stat_names;
};

FrameworkModel wealth_framework_model(const WealthModelConfig& config);

struct TrailRecord {
    int iteration = 0;
    Phase phase = Phase::dynamic;
    int candidate = 0;
    std::string branch;  // candidate generation rule or search branch
    Vector mape_per_stat;
    double mape_total = 0.0;
    double neg_log_lik = std::numeric_limits<double>::quiet_NaN();  // dynamic phase only
    Matrix dynamic_values;  // N_dyn x T
    Matrix het_values;      // K_het x N_het
};

struct MetricsReport {
    Vector mape_per_stat;
    double mape_total = 0.0;
    double dynamic_mae = std::numeric_limits<double>::quiet_NaN();
    double het_euclidean = std::numeric_limits<double>::quiet_NaN();
};

struct Reference {
    std::optional<DynamicSchedule> dynamic;
    std::optional<Matrix> het;
};

/// Index of the lowest-error record; ties go to the earliest.
int select_best(const std::vector<TrailRecord>& trail);

MetricsReport make_report(const TrailRecord& best, const Reference& reference);

/// Loop state; serializable so an interrupted run can continue exactly.
struct CalibrationState {
    int next_iteration = 0;
    HeterogeneousAssignment assignment;  // after clustering
    CandidateSet candidates;
    DynamicSchedule dynamic_current;     // used by heterogeneous phases
    double dynamic_block_best = std::numeric_limits<double>::infinity();
    bool in_dynamic_block = false;
    HeterogeneousState het;              // gp is rebuilt on the next step
    Matrix het_current;                  // frozen during dynamic phases
    std::vector<TrailRecord> trail;
    std::string dynamic_log;
    std::string heterogeneous_log;
    int clustering_calls = 0;
};

struct FrameworkResult {
    CalibrationState state;
    int best_index = -1;
    MetricsReport report;
};

struct FrameworkRunOptions {
    std::filesystem::path snapshot;  // written after every iteration and on failure; empty = off
    std::optional<CalibrationState> resume;
};

FrameworkResult run_framework(const FrameworkConfig& config, const FrameworkModel& model,
                              const Matrix& validation, const Reference& reference,
                              const FrameworkRunOptions& options = {});

/// Evaluates one fixed combination with R replications; no calibration.
MetricsReport evaluate_combination(const FrameworkModel& model, const DynamicSchedule& dynamic,
                                   const HeterogeneousAssignment& het, const Matrix& validation,
                                   int replications, std::uint64_t seed, const Reference& reference);

// Output files.
std::string report_csv(const MetricsReport& report, const std::vector<std::string>& stat_names);
std::string trail_csv(const std::vector<TrailRecord>& trail, const std::vector<std::string>& stat_names);
std::string best_params_csv(const TrailRecord& best, const FrameworkConfig& config);
/// report.csv, trail.csv, best_params.csv, dynamic_log.csv, heterogeneous_log.csv.
void write_framework_outputs(const FrameworkResult& result, const FrameworkConfig& config,
                             const std::vector<std::string>& stat_names,
                             const std::filesystem::path& dir);

std::string snapshot_json(const CalibrationState& state);
CalibrationState parse_snapshot(const std::string& text);

}  // namespace abmcal
