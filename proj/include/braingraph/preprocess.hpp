#pragma once

#include <optional>
#include <string>
#include <vector>

#include "braingraph/io.hpp"

namespace braingraph {

struct Provenance {
    std::vector<std::string> regressors;       // nuisance columns removed, in design order
    bool normalized = false;
    std::vector<std::size_t> degenerate_rois;  // zero-variance columns, output as all zeros
};

struct CleanTimeSeries {
    Matrix data;  // T x N
    std::string subject_id;
    std::optional<Label> label;
    double tr_seconds = 0.72;
    Provenance provenance;

    std::size_t timepoints() const noexcept { return data.rows(); }
    std::size_t rois() const noexcept { return data.cols(); }
    bool is_degenerate(std::size_t roi) const;
};

// Columns whose population standard deviation falls below this fraction of
// max(1, max |x|) are treated as constant.
inline constexpr double kDegenerateRelTol = 1e-12;

// Least-squares residual Y - D * beta per ROI. Throws ConditioningError when
// the design's smallest singular value is below 1e-10 times its largest.
RoiTimeSeries regress_nuisance(const RoiTimeSeries& ts, const NuisanceDesign& design);

// Per-column zero mean / unit population variance. Constant columns become
// zeros and are listed in provenance.degenerate_rois.
CleanTimeSeries normalize(const RoiTimeSeries& ts);

// Same standardisation on a bare matrix; degenerate column indices are
// appended to `degenerate` when it is non-null.
Matrix standardize_columns(const Matrix& x, std::vector<std::size_t>* degenerate = nullptr);

// Optional nuisance regression followed by normalisation,
// with the regressors used recorded in provenance.
CleanTimeSeries preprocess(const RoiTimeSeries& ts, const NuisanceDesign* design);

}  // namespace braingraph
