#include <cmath>

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"
#include "braingraph/preprocess.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace braingraph;
using namespace testsupport;

namespace {

NuisanceDesign trend_design(std::size_t t) {
    NuisanceDesign d;
    d.columns = Matrix(t, 3);
    for (std::size_t r = 0; r < t; ++r) {
        const double x = static_cast<double>(r) / static_cast<double>(t - 1);
        d.columns(r, 0) = 1;
        d.columns(r, 1) = x;
        d.columns(r, 2) = x * x;
    }
    d.names = {"intercept", "linear", "quadratic"};
    return d;
}

NuisanceDesign random_design(std::size_t t, std::size_t k, Rng& rng) {
    NuisanceDesign d;
    d.columns = gaussian_matrix(t, k, rng);
    for (std::size_t r = 0; r < t; ++r) d.columns(r, 0) = 1.0;
    for (std::size_t c = 0; c < k; ++c) d.names.push_back("c" + std::to_string(c));
    return d;
}

// max |D^T R| / (||D|| ||Y||), the scale-free orthogonality residual.
double orthogonality(const Matrix& d, const Matrix& y, const Matrix& r) {
    double worst = 0;
    for (std::size_t a = 0; a < d.cols(); ++a)
        for (std::size_t b = 0; b < r.cols(); ++b) {
            double s = 0;
            for (std::size_t t = 0; t < d.rows(); ++t) s += d(t, a) * r(t, b);
            worst = std::max(worst, std::abs(s));
        }
    return worst / (frobenius_norm(d) * frobenius_norm(y));
}

}  // namespace

TEST_CASE("series equal to a design column regresses to zero") {
    const NuisanceDesign d = trend_design(30);
    Matrix y(30, 2);
    for (std::size_t t = 0; t < 30; ++t) {
        y(t, 0) = d.columns(t, 2);
        y(t, 1) = 3.0 * d.columns(t, 1) - 2.0;
    }
    const RoiTimeSeries r = regress_nuisance(raw_series(y), d);
    for (double v : r.data.values()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("residual of random data is orthogonal to the trend design") {
    Rng rng(5);
    const NuisanceDesign d = trend_design(50);
    const Matrix y = gaussian_matrix(50, 3, rng);
    const RoiTimeSeries r = regress_nuisance(raw_series(y), d);
    CHECK(orthogonality(d.columns, y, r.data) < 1e-10);
}

TEST_CASE("duplicated design column is a conditioning error naming it") {
    NuisanceDesign d = trend_design(20);
    Matrix cols(20, 4);
    for (std::size_t t = 0; t < 20; ++t) {
        for (std::size_t c = 0; c < 3; ++c) cols(t, c) = d.columns(t, c);
        cols(t, 3) = d.columns(t, 1);
    }
    d.columns = cols;
    d.names.push_back("linear_copy");
    Rng rng(1);
    try {
        regress_nuisance(raw_series(gaussian_matrix(20, 2, rng)), d);
        FAIL("expected a conditioning error");
    } catch (const ConditioningError& e) {
        const std::string what = e.what();
        CHECK(what.find("linear") != std::string::npos);
        CHECK(what.find("linear_copy") != std::string::npos);
    }
}

TEST_CASE("design row mismatch is a dimension error") {
    Rng rng(2);
    CHECK_THROWS_AS(regress_nuisance(raw_series(gaussian_matrix(10, 2, rng)), trend_design(12)), DimensionError);
}

TEST_CASE("normalize a column to population z-scores") {
    const CleanTimeSeries c = normalize(raw_series(Matrix::from_rows({{2}, {4}, {6}})));
    const double z = std::sqrt(1.5);  // 2 / sqrt(8/3)
    CHECK(c.data(0, 0) == doctest::Approx(-z).epsilon(1e-15));
    CHECK(std::abs(c.data(1, 0)) < 1e-15);
    CHECK(c.data(2, 0) == doctest::Approx(z).epsilon(1e-15));
    CHECK(c.data(2, 0) == doctest::Approx(1.224744871391589));
    CHECK(c.provenance.normalized);
}

TEST_CASE("constant column becomes zeros and is flagged") {
    const CleanTimeSeries c = normalize(raw_series(Matrix::from_rows({{5, 1}, {5, 2}, {5, 4}})));
    CHECK(c.data.column(0) == std::vector<double>{0, 0, 0});
    CHECK(c.provenance.degenerate_rois == std::vector<std::size_t>{0});
    CHECK(c.is_degenerate(0));
    CHECK(!c.is_degenerate(1));
}

TEST_CASE("normalize needs two timepoints") {
    RoiTimeSeries ts;
    ts.data = Matrix(1, 2, 1.0);
    CHECK_THROWS_AS(normalize(ts), ValidationError);
}

TEST_CASE("preprocess records the regressors used") {
    Rng rng(4);
    const Matrix motion = gaussian_matrix(40, 6, rng);
    const NuisanceDesign d = make_nuisance_design(motion, true);
    const CleanTimeSeries c = preprocess(raw_series(gaussian_matrix(40, 3, rng)), &d);
    CHECK(c.provenance.regressors == d.names);
    const CleanTimeSeries plain = preprocess(raw_series(gaussian_matrix(40, 3, rng)), nullptr);
    CHECK(plain.provenance.regressors.empty());
}

TEST_CASE("property: normalized columns have zero mean and unit variance") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t t = 2 + rng.uniform_index(100), n = 1 + rng.uniform_index(8);
        Matrix y = gaussian_matrix(t, n, rng);
        for (std::size_t c = 0; c < n; ++c) {
            const double a = rng.uniform(0.01, 1000), b = rng.uniform(-1e3, 1e3);
            for (std::size_t r = 0; r < t; ++r) y(r, c) = a * y(r, c) + b;
        }
        const CleanTimeSeries z = normalize(raw_series(y));
        for (std::size_t c = 0; c < n; ++c) {
            double mu = 0, var = 0;
            for (std::size_t r = 0; r < t; ++r) mu += z.data(r, c);
            mu /= static_cast<double>(t);
            for (std::size_t r = 0; r < t; ++r) var += (z.data(r, c) - mu) * (z.data(r, c) - mu);
            var /= static_cast<double>(t);
            CHECK(std::abs(mu) < 1e-10);
            CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("property: normalize is idempotent on non-degenerate columns") {
    Rng rng(22);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix y = gaussian_matrix(3 + rng.uniform_index(60), 1 + rng.uniform_index(6), rng);
        const CleanTimeSeries once = normalize(raw_series(y));
        const CleanTimeSeries twice = normalize(raw_series(once.data));
        CHECK(max_abs_diff(once.data, twice.data) < 1e-12);
    }
}

TEST_CASE("property: residuals are orthogonal and regression is idempotent") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t t = 20 + rng.uniform_index(200), k = 1 + rng.uniform_index(12), n = 1 + rng.uniform_index(6);
        const NuisanceDesign d = random_design(t, k, rng);
        Matrix y = gaussian_matrix(t, n, rng);
        for (double& v : y.values()) v = 50.0 * v + 10.0;
        const RoiTimeSeries once = regress_nuisance(raw_series(y), d);
        CHECK(orthogonality(d.columns, y, once.data) < 1e-10);
        const RoiTimeSeries twice = regress_nuisance(once, d);
        CHECK(max_abs_diff(once.data, twice.data) / frobenius_norm(y) < 1e-10);
    }
}
