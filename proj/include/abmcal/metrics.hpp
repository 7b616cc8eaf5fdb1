#pragma once

// Report metrics shared by the calibration components.

#include "abmcal/common.hpp"
#include "abmcal/wealth_model.hpp"

namespace abmcal {

inline constexpr double kMapeEpsilon = 1e-9;

struct MapeResult {
    Vector per_stat;
    double total = 0.0;  // mean of per_stat
};

/// per-stat mean_t |sim - val| / max(|val|, eps).
MapeResult mape(const Matrix& sim, const Matrix& val);

/// Mean over (n, t) of |est - ref|.
double dynamic_mae(const DynamicSchedule& est, const DynamicSchedule& ref);

/// L2 norm of the flattened difference; rows are clusters.
double heterogeneous_euclidean(const Matrix& est, const Matrix& ref);

}  // namespace abmcal
