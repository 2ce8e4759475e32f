#include "callosum/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace callosum {

MetricsReport compute_metrics(const Matrix& predictions, const Matrix& targets) {
    if (!predictions.same_shape(targets))
        throw std::invalid_argument("compute_metrics: shape mismatch");
    if (predictions.rows < 2)
        throw std::invalid_argument("compute_metrics: need >= 2 rows for trend F1");

    const std::size_t n = predictions.data.size();
    MetricsReport r;

    double abs_sum = 0.0, sq_sum = 0.0, target_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = predictions.data[i] - targets.data[i];
        abs_sum += std::fabs(d);
        sq_sum += d * d;
        target_sum += targets.data[i];
    }
    r.mae = abs_sum / double(n);
    r.mse = sq_sum / double(n);
    r.rmse = std::sqrt(r.mse);

    double mean = target_sum / double(n);
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = targets.data[i] - mean;
        ss_tot += d * d;
    }
    if (ss_tot == 0.0) {
        r.r2_defined = false;
        r.r2 = 0.0;
    } else {
        r.r2 = 1.0 - sq_sum / ss_tot;
    }

    // trend over consecutive rows, per column
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t row = 1; row < predictions.rows; ++row) {
        for (std::size_t col = 0; col < predictions.cols; ++col) {
            bool pred_up = predictions(row, col) > predictions(row - 1, col);
            bool targ_up = targets(row, col) > targets(row - 1, col);
            if (pred_up && targ_up) ++tp;
            else if (pred_up && !targ_up) ++fp;
            else if (!pred_up && targ_up) ++fn;
        }
    }
    std::size_t denom = 2 * tp + fp + fn;
    r.trend_f1 = denom == 0 ? 1.0 : (2.0 * double(tp)) / double(denom);
    return r;
}

} // namespace callosum
