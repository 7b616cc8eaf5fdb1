#pragma once

// Dynamic-parameter calibration: per-candidate Gaussian likelihoods against the
// validation trace, HMM regimes over the simulation-minus-validation deviations,
// merged regimes across candidates, and a weighted Beta posterior per merged
// regime that generates the next candidate schedules.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abmcal/beta.hpp"
#include "abmcal/hmm.hpp"
#include "abmcal/simulator.hpp"

namespace abmcal {

enum class GenerationRule { by_time, by_regime, mode_selection, random };

GenerationRule parse_generation_rule(std::string_view name);
std::string_view to_string(GenerationRule rule);

struct CandidateSet {
    std::vector<DynamicSchedule> candidates;
    int iteration = 0;

    int size() const { return static_cast<int>(candidates.size()); }
};

/// I schedules with every (n, t) drawn uniformly from its range.
CandidateSet random_candidates(int count, const std::vector<Range>& ranges, int horizon,
                               std::uint64_t seed);

inline constexpr double kLikelihoodSdRatio = 0.1;
inline constexpr double kLikelihoodSdFloor = 1e-6;

struct LikelihoodMatrix {
    std::vector<Matrix> log_per_stat;  // per candidate, S x T: log N(d | mu, sd)
    std::vector<Matrix> sim_mean;      // per candidate, S x T
    std::vector<Matrix> sim_sd;        // per candidate, S x T
    Matrix log_joint;                  // T x I

    double per_stat(int s, int t, int i) const {
        return std::exp(log_per_stat[static_cast<std::size_t>(i)](s, t));
    }
    Matrix joint() const { return log_joint.array().exp(); }
};

/// Densities with sd = max(0.1 |mu|, 1e-6); the joint is summed in log space.
LikelihoodMatrix compute_likelihoods(const std::vector<Matrix>& sim_means, const Matrix& validation);

struct RegimeLabeling {
    Eigen::MatrixXi labels;  // T x I, 0-based regime per candidate
    std::vector<HmmFit> fits;
};

/// One HMM per candidate over the rows O_t = mu_{., t} - d_{., t}.
RegimeLabeling detect_regimes(const std::vector<Matrix>& sim_means, const Matrix& validation,
                              int num_regimes, std::uint64_t seed, const HmmOptions& options = {});

struct MergedRegimes {
    std::vector<std::vector<int>> blocks;      // timesteps (0-based) of each merged regime
    std::vector<std::vector<int>> signatures;  // label tuple shared by the block
    std::vector<int> block_of_time;

    int size() const { return static_cast<int>(blocks.size()); }
};

/// Groups timesteps with identical label tuples; blocks ordered by first occurrence.
MergedRegimes merge_regimes(const Eigen::MatrixXi& labels);

inline double poor_fit_ratio(int iteration) { return std::pow(0.9, iteration); }

/// True when every candidate's likelihood over `block` is below
/// (min_t L + ratio max_t L) / (1 + ratio), min/max over the whole horizon.
bool detect_poor_fit(const Matrix& log_joint, std::span<const int> block, int iteration);

struct RegimePosteriors {
    std::vector<std::vector<BetaPosterior>> by_param;  // [n][u]
    std::vector<bool> poor_fit;                        // [u]
};

RegimePosteriors fit_regime_posteriors(const CandidateSet& candidates,
                                       const LikelihoodMatrix& likelihoods,
                                       const MergedRegimes& merged, int iteration);

CandidateSet generate_next(const RegimePosteriors& posteriors, const MergedRegimes& merged,
                           GenerationRule rule, int num_candidates,
                           const std::vector<Range>& ranges, int horizon, std::uint64_t seed);

struct DynamicStepOptions {
    int replications = 10;
    int num_regimes = 3;
    GenerationRule rule = GenerationRule::mode_selection;
    HmmOptions hmm;
};

struct DynamicStepResult {
    CandidateSet evaluated;
    CandidateSet next;
    LikelihoodMatrix likelihoods;
    RegimeLabeling regimes;
    MergedRegimes merged;
    RegimePosteriors posteriors;
    Vector neg_log_likelihood;  // per candidate, sum_t -log L_t^i
};

/// Runs R replications per candidate (common random numbers across candidates),
/// detects regimes, fits posteriors and emits the next candidate set.
DynamicStepResult dynamic_calibration_step(const SummarySimulator& simulate,
                                           const CandidateSet& candidates,
                                           const HeterogeneousAssignment& het,
                                           const Matrix& validation,
                                           const DynamicStepOptions& options, std::uint64_t seed);

void write_dynamic_log_header(std::ostream& os);
/// Rows `iter,candidate,neg_log_lik,regime_signature,param,block,alpha,beta`.
void append_dynamic_log(std::ostream& os, int iteration, const DynamicStepResult& step);

}  // namespace abmcal
