#pragma once

#include <cstdint>
#include <functional>

#include "abmcal/wealth_model.hpp"

namespace abmcal {

/// R-replication mean of a stochastic model. Calibration code only sees this signature.
using SummarySimulator = std::function<ReplicationMean(
    const DynamicSchedule&, const HeterogeneousAssignment&, int replications, std::uint64_t seed)>;

inline SummarySimulator wealth_simulator(WealthModelConfig config) {
    return [config](const DynamicSchedule& schedule, const HeterogeneousAssignment& het,
                    int replications, std::uint64_t seed) {
        return run_replications(config, schedule, het, replications, seed);
    };
}

}  // namespace abmcal
