#include "abmcal/kmeans_init.hpp"

#include <algorithm>

namespace abmcal {

std::vector<int> kmeans_plus_plus(const Matrix& points, int k, std::mt19937_64& rng) {
    const auto n = static_cast<int>(points.rows());
    require(k >= 1 && k <= n, ErrorKind::invalid_argument,
            "k-means++: need 1 <= k <= number of points");

    const Eigen::RowVectorXd mean = points.colwise().mean();
    Eigen::RowVectorXd scale =
        ((points.rowwise() - mean).array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
        if (!(scale(j) > 0.0)) scale(j) = 1.0;
    }
    const Matrix z = (points.rowwise() - mean).array().rowwise() / scale.array();

    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(k));
    std::uniform_int_distribution<int> first(0, n - 1);
    chosen.push_back(first(rng));
    Vector d2 = (z.rowwise() - z.row(chosen.back())).rowwise().squaredNorm();

    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (static_cast<int>(chosen.size()) < k) {
        const double total = d2.sum();
        int next = 0;
        if (total <= 0.0) {
            // All remaining points coincide with a chosen center; take the first unchosen index.
            for (int i = 0; i < n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    next = i;
                    break;
                }
            }
        } else {
            double target = u(rng) * total;
            next = n - 1;
            for (int i = 0; i < n; ++i) {
                target -= d2(i);
                if (target <= 0.0 && d2(i) > 0.0) {
                    next = i;
                    break;
                }
            }
        }
        chosen.push_back(next);
        d2 = d2.cwiseMin((z.rowwise() - z.row(next)).rowwise().squaredNorm());
    }
    return chosen;
}

}  // namespace abmcal
