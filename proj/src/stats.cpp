#include "abmcal/stats.hpp"

#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace abmcal {

double sample_mean(std::span<const double> xs) {
    require(!xs.empty(), ErrorKind::invalid_argument, "mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
    require(xs.size() >= 2, ErrorKind::invalid_argument, "variance needs at least 2 samples");
    const double m = sample_mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

WelchResult welch_t_test(double mean_a, double sd_a, int n_a, double mean_b, double sd_b, int n_b) {
    require(n_a >= 2 && n_b >= 2, ErrorKind::invalid_argument, "Welch test needs n >= 2 per sample");
    const double va = sd_a * sd_a / n_a;
    const double vb = sd_b * sd_b / n_b;
    const double se2 = va + vb;
    WelchResult r;
    const double diff = mean_a - mean_b;
    if (se2 <= 0.0) {
        // Both samples constant: the ordering of the means is certain.
        r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
        r.df = static_cast<double>(n_a + n_b - 2);
        r.p_value = diff == 0.0 ? 0.5 : (diff < 0.0 ? 0.0 : 1.0);
        return r;
    }
    r.t = diff / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (n_a - 1) + vb * vb / (n_b - 1));
    const boost::math::students_t dist(r.df);
    r.p_value = boost::math::cdf(dist, r.t);
    return r;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    return welch_t_test(sample_mean(a), std::sqrt(sample_variance(a)), static_cast<int>(a.size()),
                        sample_mean(b), std::sqrt(sample_variance(b)), static_cast<int>(b.size()));
}

}  // namespace abmcal
