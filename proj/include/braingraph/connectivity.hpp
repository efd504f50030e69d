#pragma once

#include <optional>
#include <vector>

#include "braingraph/preprocess.hpp"

namespace braingraph {

struct Window {
    std::size_t start = 0;
    std::size_t length = 0;
};

// N x N Pearson correlation. Symmetric, unit diagonal; degenerate ROIs have
// zero off-diagonal entries.
struct ConnectivityMatrix {
    Matrix values;
    std::optional<Window> window;
    std::vector<std::size_t> degenerate_rois;

    std::size_t size() const noexcept { return values.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values(i, j); }

    // Throws ValidationError if symmetry, diagonal or range invariants fail.
    void validate() const;
};

// Correlation of the columns of x (re-standardised internally).
ConnectivityMatrix correlation_matrix(const Matrix& x);

ConnectivityMatrix pearson_full(const CleanTimeSeries& ts);

// Rows [start, start + gamma), re-normalised within the window, then correlated.
ConnectivityMatrix pearson_windowed(const CleanTimeSeries& ts, std::size_t start, std::size_t gamma);

// The window slice after per-window normalisation (used for BOLD features).
CleanTimeSeries normalized_window(const CleanTimeSeries& ts, std::size_t start, std::size_t gamma);

}  // namespace braingraph
