#include "braingraph/connectivity.hpp"

#include <algorithm>
#include <cmath>

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"

namespace braingraph {

void ConnectivityMatrix::validate() const {
    const std::size_t n = values.rows();
    if (values.cols() != n) throw ValidationError("connectivity matrix is not square");
    constexpr double tol = 1e-12;
    for (std::size_t i = 0; i < n; ++i) {
        if (values(i, i) != 1.0) throw ValidationError("connectivity diagonal is not 1 at " + std::to_string(i));
        for (std::size_t j = 0; j < n; ++j) {
            const double v = values(i, j);
            if (!std::isfinite(v) || v < -1.0 - tol || v > 1.0 + tol)
                throw ValidationError("connectivity entry out of range at (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")");
            if (std::abs(v - values(j, i)) > tol) throw ValidationError("connectivity matrix is not symmetric");
        }
    }
}

ConnectivityMatrix correlation_matrix(const Matrix& x) {
    ConnectivityMatrix cm;
    const Matrix z = standardize_columns(x, &cm.degenerate_rois);
    cm.values = kernels::cross_product(z);
    const double inv_t = 1.0 / static_cast<double>(x.rows());
    const std::size_t n = cm.values.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double& v = cm.values(i, j);
            v = std::clamp(v * inv_t, -1.0, 1.0);
        }
        cm.values(i, i) = 1.0;  // degenerate rows included
    }
    return cm;
}

ConnectivityMatrix pearson_full(const CleanTimeSeries& ts) {
    if (ts.timepoints() < 2) throw ValidationError("correlation needs at least 2 timepoints");
    return correlation_matrix(ts.data);
}

CleanTimeSeries normalized_window(const CleanTimeSeries& ts, std::size_t start, std::size_t gamma) {
    if (gamma < 2) throw BoundsError("window length must be >= 2, got " + std::to_string(gamma));
    if (start > ts.timepoints() || gamma > ts.timepoints() - start)
        throw BoundsError("window [" + std::to_string(start) + ", " + std::to_string(start + gamma) +
                          ") exceeds series length " + std::to_string(ts.timepoints()));
    CleanTimeSeries out;
    out.subject_id = ts.subject_id;
    out.label = ts.label;
    out.tr_seconds = ts.tr_seconds;
    out.provenance.regressors = ts.provenance.regressors;
    out.provenance.normalized = true;
    out.data = standardize_columns(ts.data.row_slice(start, gamma), &out.provenance.degenerate_rois);
    return out;
}

ConnectivityMatrix pearson_windowed(const CleanTimeSeries& ts, std::size_t start, std::size_t gamma) {
    const CleanTimeSeries win = normalized_window(ts, start, gamma);
    ConnectivityMatrix cm = correlation_matrix(win.data);
    cm.window = Window{start, gamma};
    return cm;
}

}  // namespace braingraph
