#pragma once

// Heterogeneous-parameter calibration: a Matern-5/2 Gaussian process over the
// simulation error, an acquisition portfolio (random, max variance, min mean,
// weighted EI) and the per-iteration calibration step.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string_view>
#include <vector>

#include "abmcal/simulator.hpp"
#include "abmcal/stats.hpp"

namespace abmcal {

/// s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r), r = ||(x - y) / ell||.
template <typename DerivedX, typename DerivedY, typename DerivedL>
typename DerivedX::Scalar matern52(const Eigen::MatrixBase<DerivedX>& x,
                                   const Eigen::MatrixBase<DerivedY>& y,
                                   typename DerivedX::Scalar signal_variance,
                                   const Eigen::MatrixBase<DerivedL>& lengthscales) {
    using Scalar = typename DerivedX::Scalar;
    const Scalar r = (x - y).cwiseQuotient(lengthscales).norm();
    const Scalar s5r = std::sqrt(Scalar(5)) * r;
    return signal_variance * (Scalar(1) + s5r + s5r * s5r / Scalar(3)) * std::exp(-s5r);
}

/// (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma.
template <typename Scalar>
Scalar expected_improvement(Scalar mean, Scalar sd, Scalar best) {
    if (!(sd > Scalar(0))) return std::max(best - mean, Scalar(0));
    const Scalar z = (best - mean) / sd;
    return (best - mean) * normal_cdf(z) + sd * normal_pdf(z);
}

/// (1 - w) (best - mu) Phi(z) + w sigma phi(z); w = 0.5 is half of EI.
template <typename Scalar>
Scalar weighted_ei(Scalar mean, Scalar sd, Scalar best, Scalar w) {
    if (!(sd > Scalar(0))) return (Scalar(1) - w) * std::max(best - mean, Scalar(0));
    const Scalar z = (best - mean) / sd;
    return (Scalar(1) - w) * (best - mean) * normal_cdf(z) + w * sd * normal_pdf(z);
}

/// The set G of evaluated (parameter, error) pairs.
struct EvaluationLog {
    std::vector<Vector> params;
    std::vector<double> errors;

    int size() const { return static_cast<int>(errors.size()); }
    void add(const Vector& x, double error);
    int best_index() const;  // earliest minimum; -1 when empty
    double best_error() const;
};

struct KernelHyperparams {
    double signal_variance = 1.0;
    Vector lengthscales;
    double noise_precision = 1e4;  // beta; noise variance 1/beta

    double noise_variance() const { return 1.0 / noise_precision; }
};

struct PosteriorPrediction {
    double mean = 0.0;
    double sd = 0.0;
};

inline constexpr double kGpJitter = 1e-8;
inline constexpr double kGpMaxJitter = 1e-4;

/// Exact GP regression on mean-subtracted targets with a cached Cholesky factor.
class GaussianProcess {
public:
    GaussianProcess() = default;
    GaussianProcess(const Matrix& inputs, const Vector& targets, const KernelHyperparams& hyper);

    PosteriorPrediction predict(const Vector& query) const;
    double predict_mean(const Vector& query) const;
    double log_marginal_likelihood() const { return log_marginal_; }
    const KernelHyperparams& hyper() const { return hyper_; }
    double jitter() const { return jitter_; }
    bool empty() const { return inputs_.rows() == 0; }

private:
    Vector kernel_column(const Vector& query) const;

    Matrix inputs_;  // n x D
    KernelHyperparams hyper_;
    double offset_ = 0.0;
    Eigen::LLT<Matrix> llt_;
    Vector alpha_;
    double jitter_ = 0.0;
    double log_marginal_ = 0.0;
};

Matrix stack_rows(const std::vector<Vector>& rows);

/// Defaults used before enough data exist: s2 = var(errors) (1 if degenerate),
/// ell = 0.3 per dimension, 1/beta = 1e-4.
KernelHyperparams default_hyperparams(const EvaluationLog& log, int dims);

struct GpFit {
    KernelHyperparams hyper;
    double log_marginal = 0.0;
    std::vector<double> start_log_marginals;
};

/// Maximizes the marginal likelihood over log hyperparameters with a coordinate
/// search from 8 fixed starts. Inputs are expected in the unit box.
GpFit fit_gp(const EvaluationLog& log);

struct SearchStrategy {
    int c0 = 10;
    double xi_rand = 0.10;
    double xi_pv = 0.20;
    double xi_pm = 0.20;
    double cooling_base = 0.99;
    double r0 = 0.0;

    double xi_wei() const { return 1.0 - xi_rand - xi_pv - xi_pm; }
    bool pure_random() const { return xi_rand >= 1.0; }  // no surrogate is fitted
    double cooling_weight(int c) const { return std::pow(cooling_base, c) / 2.0; }
    void validate() const;
};

enum class SearchBranch { initial, random, max_variance, min_mean, weighted_ei };

std::string_view to_string(SearchBranch branch);

struct Proposal {
    Vector point;  // unit-box coordinates
    SearchBranch branch = SearchBranch::initial;
    double acquisition = 0.0;
};

struct InnerSearchOptions {
    int uniform_starts = 32;
    int perturbed_starts = 32;
    double perturbation_sd = 0.1;
    double initial_step = 0.1;
    double min_step = 1e-3;
    int max_iterations = 100;
};

/// Maximizes `objective` over [0,1]^D by compass search from uniform and
/// incumbent-perturbed starts; never worse than the best start.
Vector maximize_in_box(const std::function<double(const Vector&)>& objective,
                       const Vector& incumbent, std::mt19937_64& rng,
                       const InnerSearchOptions& options, double& best_value);

/// Next point in the unit box. c < c0 or an empty GP gives a uniform draw.
Proposal propose_next(const EvaluationLog& log, const GaussianProcess& gp,
                      const SearchStrategy& strategy, int c, int dims, std::uint64_t seed,
                      const InnerSearchOptions& inner = {});

/// Forces one branch; used by propose_next and by tests.
Proposal propose_with_branch(const EvaluationLog& log, const GaussianProcess& gp,
                             SearchBranch branch, double cooling_weight, int dims,
                             std::uint64_t seed, const InnerSearchOptions& inner = {});

inline constexpr int kRefitThreshold = 5;

// Flattens K x N values cluster-major into unit-box coordinates and back.
Vector to_unit_box(const Matrix& values, const std::vector<Range>& ranges);
Matrix from_unit_box(const Vector& point, int clusters, const std::vector<Range>& ranges);

struct HeterogeneousState {
    EvaluationLog log;      // unit-box points and total MAPE
    Vector next;            // unit-box point evaluated by the next step
    SearchBranch next_branch = SearchBranch::initial;
    GaussianProcess gp;
    int iteration = 0;      // heterogeneous evaluations so far
    std::uint64_t replication_seed = 0;  // shared by every evaluation of the run
};

struct HeterogeneousStepResult {
    Matrix evaluated;   // K x N values just simulated
    Matrix sim_mean;    // S x T
    double error = 0.0;
    double best_so_far = 0.0;
    double gp_loglik = 0.0;
    SearchBranch branch = SearchBranch::initial;  // how `evaluated` was proposed
    Proposal next;
};

/// Starts from a uniform random point; all evaluations reuse one replication seed.
HeterogeneousState start_heterogeneous(int dims, std::uint64_t seed);

/// Evaluates state.next with R replications (common random numbers), appends it to G, refits the GP and
/// proposes the following point.
HeterogeneousStepResult heterogeneous_calibration_step(const SummarySimulator& simulate,
                                                       HeterogeneousState& state,
                                                       const DynamicSchedule& dyn_best,
                                                       const HeterogeneousAssignment& het,
                                                       const Matrix& validation, int replications,
                                                       const SearchStrategy& strategy,
                                                       std::uint64_t seed);

void write_heterogeneous_log_header(std::ostream& os, int dims);
/// Row `iter,branch,param_1..param_D,error,best_so_far,gp_loglik` with parameters in model units.
void append_heterogeneous_log(std::ostream& os, int iteration, const HeterogeneousStepResult& step);

}  // namespace abmcal
