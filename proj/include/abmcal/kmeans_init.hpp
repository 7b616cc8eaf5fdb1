#pragma once

#include <random>
#include <vector>

#include "abmcal/common.hpp"

namespace abmcal {

/// k-means++ seeding over the rows of `points`; distances are computed on
/// per-column standardized data so no single column dominates. Returns row indices.
std::vector<int> kmeans_plus_plus(const Matrix& points, int k, std::mt19937_64& rng);

}  // namespace abmcal
