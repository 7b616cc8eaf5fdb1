#pragma once

// Wealth-distribution agent-based model with one dynamic hook (wealth income,
// one value per timestep) and one heterogeneous hook (wealth consumption, one
// value per agent cluster).
//
// Per step t, agents in id order:
//   1. harvest the wealth of their cell, split equally among co-located agents
//   2. pay consumption[cluster] * base_metabolism, flooring wealth at zero
//   3. move to the richest cell within `vision` (Moore ring, torus)
//   4. every cell regrows income[t] * base_regrowth, capped at max_cell_wealth
//
// Agent initial wealth is drawn from config.rng_seed (the population); cell
// wealth and agent placement are drawn from the per-run seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "abmcal/common.hpp"

namespace abmcal {

struct WealthModelConfig {
    int grid_width = 25;
    int grid_height = 25;
    int num_agents = 100;
    int horizon = 50;
    int vision = 1;
    double base_metabolism = 2.0;
    double base_regrowth = 1.0;
    double max_cell_wealth = 10.0;
    Range initial_wealth{0.0, 10.0};
    std::uint64_t rng_seed = 1;

    void validate() const;
};

/// One row per dynamic parameter, one column per timestep.
struct DynamicSchedule {
    Matrix values;
    std::vector<Range> ranges;

    int num_params() const { return static_cast<int>(values.rows()); }
    int horizon() const { return static_cast<int>(values.cols()); }
    void validate() const;
};

enum class ClusterRule {
    explicit_labels,
    // Cluster 0 = top half of the population by initial wealth, cluster 1 = the rest.
    initial_wealth_halves,
};

struct HeterogeneousAssignment {
    std::vector<int> cluster_of_agent;  // 0-based labels, used with explicit_labels
    ClusterRule rule = ClusterRule::explicit_labels;
    Matrix values;  // K_het x N_het
    std::vector<Range> ranges;

    int num_clusters() const { return static_cast<int>(values.rows()); }
    int num_params() const { return static_cast<int>(values.cols()); }
    void validate(int num_agents) const;
};

struct SummaryTrace {
    Matrix stats;  // S x T
    std::vector<std::string> names;

    int num_stats() const { return static_cast<int>(stats.rows()); }
    int horizon() const { return static_cast<int>(stats.cols()); }
};

/// Row a holds agent a's attributes over time, attribute-major: [attr0 t1..tT, attr1 t1..tT, ...].
struct AgentTrace {
    Matrix values;
    int attributes = 1;

    int num_agents() const { return static_cast<int>(values.rows()); }
    int horizon() const { return static_cast<int>(values.cols()) / attributes; }
};

struct ValidationData {
    SummaryTrace trace;
    int replications = 0;
    std::uint64_t master_seed = 0;
};

/// Per-step wealth bookkeeping. total[t] - total[t-1] == harvested[t] - consumed[t] + floor_loss[t].
struct WealthLedger {
    Vector total;       // total agent wealth after step t; total(0) is the initial wealth
    Vector harvested;   // index t = step t (1-based; entry 0 unused)
    Vector consumed;
    Vector floor_loss;  // wealth restored by the zero floor, always >= 0
};

struct SimulationResult {
    SummaryTrace summary;
    AgentTrace agents;
    WealthLedger ledger;
    std::vector<int> clusters;  // labels actually used in this run
};

inline const std::vector<std::string>& summary_stat_names() {
    static const std::vector<std::string> names{
        "HighClassWealthAvg", "MiddleClassWealthAvg", "LowClassWealthAvg", "GiniIndex"};
    return names;
}

constexpr int kNumSummaryStats = 4;

/// Relative mean absolute difference sum_ij |w_i - w_j| / (2 n^2 mean). Zero for an all-zero vector.
template <typename Derived>
typename Derived::Scalar gini(const Eigen::DenseBase<Derived>& wealths) {
    using Scalar = typename Derived::Scalar;
    require(wealths.size() > 0, ErrorKind::invalid_argument, "gini: empty wealth vector");
    const auto flat = wealths.derived().reshaped();
    std::vector<Scalar> w(flat.begin(), flat.end());
    for (const Scalar& x : w) {
        require(x >= Scalar(0), ErrorKind::invalid_argument, "gini: negative wealth");
    }
    std::sort(w.begin(), w.end());
    const Scalar total = std::accumulate(w.begin(), w.end(), Scalar(0));
    if (total <= Scalar(0)) return Scalar(0);
    // Sorted form of the pairwise sum: sum_i (2i - n - 1) w_(i), i 1-based ascending.
    const auto n = static_cast<Eigen::Index>(w.size());
    Scalar acc(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += Scalar(2 * (i + 1) - n - 1) * w[static_cast<std::size_t>(i)];
    }
    return acc / (Scalar(n) * total);
}

/// Sizes of the (top, middle, bottom) wealth classes for A agents.
struct TercileSizes {
    int top;
    int middle;
    int bottom;
};
TercileSizes tercile_sizes(int num_agents);

/// (high-class mean, middle-class mean, low-class mean, gini).
Vector summarize(const Vector& wealths);

SimulationResult run_simulation(const WealthModelConfig& config,
                                const DynamicSchedule& schedule,
                                const HeterogeneousAssignment& het,
                                std::uint64_t seed);

/// Cluster labels the run would use for the configured population.
std::vector<int> resolve_clusters(const WealthModelConfig& config,
                                  const HeterogeneousAssignment& het);

/// Element-wise mean of `replications` runs seeded derive_seed(master_seed, r).
ValidationData generate_validation(const WealthModelConfig& config,
                                   const DynamicSchedule& schedule,
                                   const HeterogeneousAssignment& het,
                                   int replications,
                                   std::uint64_t master_seed);

/// Mean summary and agent traces over R runs; summary_mean is what calibration compares.
struct ReplicationMean {
    Matrix summary_mean;  // S x T
    Matrix agent_mean;    // A x (Att*T)
};

ReplicationMean run_replications(const WealthModelConfig& config,
                                 const DynamicSchedule& schedule,
                                 const HeterogeneousAssignment& het,
                                 int replications,
                                 std::uint64_t master_seed);

// Synthetic ground truth: income 1.5 on steps 1-10, 21-30, 41-50 and 0.5 elsewhere,
// range [0, 2]; consumption 0.9 for the initially-richer half, 0.1 for the rest, range [0, 1].
DynamicSchedule synthetic_income_schedule(int horizon);
HeterogeneousAssignment synthetic_consumption();

}  // namespace abmcal
