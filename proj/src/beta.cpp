#include "abmcal/beta.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace abmcal {

namespace {

constexpr double kMaxShape = 1e8;

double log_beta_fn(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

struct Prepared {
    std::vector<double> x;
    std::vector<double> w;
};

Prepared prepare(std::span<const double> values, std::span<const double> weights) {
    require(!values.empty(), ErrorKind::invalid_argument, "fit_beta: no values");
    require(values.size() == weights.size(), ErrorKind::dimension_mismatch,
            "fit_beta: values and weights differ in length");
    Prepared p;
    p.x.reserve(values.size());
    for (double v : values) p.x.push_back(std::clamp(v, kBetaClip, 1.0 - kBetaClip));
    double total = 0.0;
    for (double w : weights) {
        require(w >= 0.0 && std::isfinite(w), ErrorKind::invalid_argument,
                "fit_beta: weights must be finite and nonnegative");
        total += w;
    }
    p.w.assign(weights.begin(), weights.end());
    if (total <= 0.0) {
        std::fill(p.w.begin(), p.w.end(), 1.0 / static_cast<double>(p.w.size()));
    } else {
        for (double& w : p.w) w /= total;
    }
    return p;
}

}  // namespace

double beta_log_likelihood(double alpha, double beta, std::span<const double> values,
                           std::span<const double> weights) {
    double ll = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
        const double x = std::clamp(values[j], kBetaClip, 1.0 - kBetaClip);
        ll += weights[j] * ((alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x));
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    return ll - wsum * log_beta_fn(alpha, beta);
}

BetaPosterior beta_from_moments(double mean, double variance) {
    mean = std::clamp(mean, kBetaClip, 1.0 - kBetaClip);
    variance = std::max(variance, kBetaVarianceFloor);
    const double cap = mean * (1.0 - mean);
    // A variance at or above m(1-m) has no Beta; keep the mean with a U-shaped spread.
    const double common = variance < cap ? cap / variance - 1.0 : 1e-2;
    BetaPosterior b;
    b.alpha = std::min(mean * common, kMaxShape);
    b.beta = std::min((1.0 - mean) * common, kMaxShape);
    return b;
}

BetaPosterior fit_beta(std::span<const double> values, std::span<const double> weights) {
    const Prepared p = prepare(values, weights);
    double m = 0.0;
    for (std::size_t j = 0; j < p.x.size(); ++j) m += p.w[j] * p.x[j];
    double v = 0.0;
    for (std::size_t j = 0; j < p.x.size(); ++j) v += p.w[j] * (p.x[j] - m) * (p.x[j] - m);
    if (v < kBetaVarianceFloor) {
        BetaPosterior b = beta_from_moments(m, kBetaVarianceFloor);
        b.moment_fallback = true;
        return b;
    }

    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t j = 0; j < p.x.size(); ++j) {
        s1 += p.w[j] * std::log(p.x[j]);
        s2 += p.w[j] * std::log1p(-p.x[j]);
    }
    auto objective = [&](double a, double b) {
        return (a - 1.0) * s1 + (b - 1.0) * s2 - log_beta_fn(a, b);
    };

    BetaPosterior start = beta_from_moments(m, v);
    double a = start.alpha;
    double b = start.beta;
    double f = objective(a, b);
    for (int it = 0; it < 200; ++it) {
        using boost::math::digamma;
        using boost::math::trigamma;
        const double psi_ab = digamma(a + b);
        const double g1 = s1 - digamma(a) + psi_ab;
        const double g2 = s2 - digamma(b) + psi_ab;
        if (std::max(std::abs(g1), std::abs(g2)) < 1e-12) break;
        const double t_ab = trigamma(a + b);
        const double h11 = t_ab - trigamma(a);
        const double h22 = t_ab - trigamma(b);
        const double h12 = t_ab;
        const double det = h11 * h22 - h12 * h12;
        if (!(det > 0.0)) break;
        const double da = -(h22 * g1 - h12 * g2) / det;
        const double db = -(h11 * g2 - h12 * g1) / det;
        double step = 1.0;
        bool moved = false;
        for (int half = 0; half < 60; ++half, step *= 0.5) {
            const double na = a + step * da;
            const double nb = b + step * db;
            if (na <= 0.0 || nb <= 0.0 || na > kMaxShape || nb > kMaxShape) continue;
            const double nf = objective(na, nb);
            if (nf >= f) {
                moved = std::abs(na - a) + std::abs(nb - b) > 1e-14 * (a + b);
                a = na;
                b = nb;
                f = nf;
                break;
            }
        }
        if (!moved) break;
    }
    return BetaPosterior{a, b, false};
}

double sample_beta(const BetaPosterior& b, std::mt19937_64& rng) {
    std::gamma_distribution<double> ga(b.alpha, 1.0);
    std::gamma_distribution<double> gb(b.beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    if (!(x + y > 0.0)) return b.mean();
    return std::clamp(x / (x + y), 0.0, 1.0);
}

}  // namespace abmcal
