#pragma once

#include <cmath>
#include <numbers>
#include <span>

#include "abmcal/common.hpp"

namespace abmcal {

template <typename Scalar>
Scalar normal_pdf(Scalar z) {
    return std::exp(Scalar(-0.5) * z * z) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar normal_cdf(Scalar z) {
    return Scalar(0.5) * std::erfc(-z / std::numbers::sqrt2_v<Scalar>);
}

template <typename Scalar>
Scalar normal_log_pdf(Scalar x, Scalar mean, Scalar sd) {
    const Scalar z = (x - mean) / sd;
    return Scalar(-0.5) * z * z - std::log(sd) -
           Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Scalar m = x.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((x.derived().array() - m).exp().sum());
}

double sample_mean(std::span<const double> xs);
/// Unbiased (n-1) sample variance.
double sample_variance(std::span<const double> xs);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p_value = 0.5;  // one-tailed, alternative mean(a) < mean(b)
};

/// Welch's unequal-variance t-test, one-tailed for mean(a) < mean(b).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Same test from summary statistics (means, standard deviations, sizes).
WelchResult welch_t_test(double mean_a, double sd_a, int n_a, double mean_b, double sd_b, int n_b);

}  // namespace abmcal
