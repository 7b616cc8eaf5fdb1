#include "abmcal/metrics.hpp"

namespace abmcal {

MapeResult mape(const Matrix& sim, const Matrix& val) {
    require(sim.rows() == val.rows() && sim.cols() == val.cols(), ErrorKind::dimension_mismatch,
            "mape: simulation and validation shapes differ");
    require(sim.size() > 0, ErrorKind::invalid_argument, "mape: empty traces");
    MapeResult out;
    const Matrix rel = (sim - val).cwiseAbs().cwiseQuotient(val.cwiseAbs().cwiseMax(kMapeEpsilon));
    out.per_stat = rel.rowwise().mean();
    out.total = out.per_stat.mean();
    return out;
}

double dynamic_mae(const DynamicSchedule& est, const DynamicSchedule& ref) {
    require(est.values.rows() == ref.values.rows() && est.values.cols() == ref.values.cols(),
            ErrorKind::dimension_mismatch, "dynamic_mae: schedule shapes differ");
    return (est.values - ref.values).cwiseAbs().mean();
}

double heterogeneous_euclidean(const Matrix& est, const Matrix& ref) {
    require(est.rows() == ref.rows() && est.cols() == ref.cols(), ErrorKind::dimension_mismatch,
            "heterogeneous_euclidean: matrix shapes differ");
    return (est - ref).norm();
}

}  // namespace abmcal
