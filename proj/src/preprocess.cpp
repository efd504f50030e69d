#include "braingraph/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "braingraph/error.hpp"

namespace braingraph {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

constexpr double kRankTol = 1e-10;

}  // namespace

bool CleanTimeSeries::is_degenerate(std::size_t roi) const {
    const auto& d = provenance.degenerate_rois;
    return std::binary_search(d.begin(), d.end(), roi);
}

RoiTimeSeries regress_nuisance(const RoiTimeSeries& ts, const NuisanceDesign& design) {
    ts.validate();
    design.validate(ts.timepoints());
    const auto d = view(design.columns);
    const auto y = view(ts.data);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double largest = sv(0);
    const double smallest = sv(sv.size() - 1);
    if (design.columns.rows() < design.columns.cols() || !(smallest >= kRankTol * largest)) {
        // Columns carrying weight in the null-space direction are the culprits.
        const Eigen::VectorXd null_dir = svd.matrixV().col(svd.matrixV().cols() - 1);
        const double peak = null_dir.cwiseAbs().maxCoeff();
        std::ostringstream msg;
        msg << "nuisance design is rank deficient (smallest/largest singular value = " << smallest / largest
            << "); offending columns:";
        for (Eigen::Index k = 0; k < null_dir.size(); ++k)
            if (std::abs(null_dir(k)) > 0.1 * peak) msg << ' ' << design.names[static_cast<std::size_t>(k)];
        throw ConditioningError(msg.str());
    }

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(d);
    const Eigen::MatrixXd beta = qr.solve(Eigen::MatrixXd(y));
    const Eigen::MatrixXd residual = y - d * beta;

    RoiTimeSeries out = ts;
    for (std::size_t r = 0; r < out.data.rows(); ++r)
        for (std::size_t c = 0; c < out.data.cols(); ++c)
            out.data(r, c) = residual(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return out;
}

Matrix standardize_columns(const Matrix& x, std::vector<std::size_t>* degenerate) {
    if (x.rows() < 2) throw ValidationError("normalisation needs at least 2 timepoints");
    const std::size_t t = x.rows();
    Matrix out(t, x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double mean = 0.0;
        double scale = 0.0;
        for (std::size_t r = 0; r < t; ++r) {
            mean += x(r, c);
            scale = std::max(scale, std::abs(x(r, c)));
        }
        mean /= static_cast<double>(t);
        double ss = 0.0;
        for (std::size_t r = 0; r < t; ++r) {
            const double dv = x(r, c) - mean;
            ss += dv * dv;
        }
        const double sd = std::sqrt(ss / static_cast<double>(t));
        if (!(sd > kDegenerateRelTol * std::max(1.0, scale))) {
            if (degenerate) degenerate->push_back(c);
            continue;  // column stays zero
        }
        for (std::size_t r = 0; r < t; ++r) out(r, c) = (x(r, c) - mean) / sd;
    }
    return out;
}

CleanTimeSeries normalize(const RoiTimeSeries& ts) {
    if (ts.timepoints() < 2) throw ValidationError("normalisation needs at least 2 timepoints");
    CleanTimeSeries out;
    out.subject_id = ts.subject_id;
    out.label = ts.label;
    out.tr_seconds = ts.tr_seconds;
    out.data = standardize_columns(ts.data, &out.provenance.degenerate_rois);
    out.provenance.normalized = true;
    return out;
}

CleanTimeSeries preprocess(const RoiTimeSeries& ts, const NuisanceDesign* design) {
    if (!design) return normalize(ts);
    CleanTimeSeries out = normalize(regress_nuisance(ts, *design));
    out.provenance.regressors = design->names;
    return out;
}

}  // namespace braingraph
