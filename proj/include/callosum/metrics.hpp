#pragma once

#include <map>
#include <string>

#include "callosum/dense.hpp"

namespace callosum {

struct MetricsReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    bool r2_defined = true;  // false when the targets are constant
    double trend_f1 = 0.0;
    std::map<std::string, double> wall_clock_seconds;
};

// Standard definitions over equal-shape matrices (rows = timesteps).
// trend_f1 scores sign(delta prediction) against sign(delta target) across
// consecutive rows, "increase" as the positive class, ties as non-increase.
MetricsReport compute_metrics(const Matrix& predictions, const Matrix& targets);

} // namespace callosum
