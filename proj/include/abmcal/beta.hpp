#pragma once

#include <random>
#include <span>

#include "abmcal/common.hpp"

namespace abmcal {

struct BetaPosterior {
    double alpha = 1.0;
    double beta = 1.0;
    bool moment_fallback = false;  // weighted variance was degenerate

    double mean() const { return alpha / (alpha + beta); }
    double sd() const {
        const double s = alpha + beta;
        return std::sqrt(alpha * beta / (s * s * (s + 1.0)));
    }
};

inline constexpr double kBetaClip = 1e-4;
inline constexpr double kBetaVarianceFloor = 1e-6;

/// Weighted Beta MLE: maximizes sum_j w_j log Beta(x_j; a, b) by Newton steps from the
/// weighted method-of-moments estimate. Values are clipped to [1e-4, 1 - 1e-4];
/// weights are renormalized to sum to one.
BetaPosterior fit_beta(std::span<const double> values, std::span<const double> weights);

/// Method-of-moments Beta for a given mean and variance (variance floored).
BetaPosterior beta_from_moments(double mean, double variance);

double sample_beta(const BetaPosterior& b, std::mt19937_64& rng);

/// Weighted Beta log-likelihood, the objective fit_beta maximizes.
double beta_log_likelihood(double alpha, double beta, std::span<const double> values,
                           std::span<const double> weights);

}  // namespace abmcal
