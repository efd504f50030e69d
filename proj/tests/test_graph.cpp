#include <algorithm>
#include <cmath>

#include "braingraph/connectivity.hpp"
#include "braingraph/error.hpp"
#include "braingraph/graph.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace braingraph;
using namespace testsupport;

namespace {

ConnectivityMatrix as_cm(const Matrix& m) {
    ConnectivityMatrix cm;
    cm.values = m;
    return cm;
}

// Counting oracle: how many positive upper-triangle values are >= the k-th largest.
std::size_t expected_edges(const Matrix& m, double p) {
    std::vector<double> pos;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (m(i, j) > 0) pos.push_back(m(i, j));
    if (pos.empty()) return 0;
    const auto k = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(pos.size()) - 1e-9));
    std::sort(pos.begin(), pos.end(), std::greater<>());
    const double cutoff = pos[std::max<std::size_t>(k, 1) - 1];
    return static_cast<std::size_t>(std::count_if(pos.begin(), pos.end(), [&](double v) { return v >= cutoff; }));
}

}  // namespace

TEST_CASE("identity correlation gives no edges") {
    const EdgeSelection s = threshold_edges(as_cm(Matrix::identity(6)), 20);
    CHECK(s.edges.empty());
    CHECK(s.no_candidates());
}

TEST_CASE("four-node example keeps the two strongest positive pairs") {
    Matrix m = Matrix::identity(4);
    const double upper[] = {0.9, 0.5, -0.3, 0.2, 0.1, -0.8};
    std::size_t k = 0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) m(i, j) = m(j, i) = upper[k++];
    const EdgeSelection s = threshold_edges(as_cm(m), 50);
    CHECK(s.candidates == 4);
    CHECK(s.edges == std::vector<Edge>{{0, 1}, {0, 2}});
    CHECK(s.cutoff == 0.5);
}

TEST_CASE("ties at the cutoff are all kept") {
    Matrix m = Matrix::identity(4);
    m(0, 1) = m(1, 0) = 0.7;
    m(2, 3) = m(3, 2) = 0.4;
    m(0, 3) = m(3, 0) = 0.4;
    m(1, 2) = m(2, 1) = 0.1;
    const EdgeSelection s = threshold_edges(as_cm(m), 50);  // ceil(0.5 * 4) = 2, third value tied
    CHECK(s.edges.size() == 3);
}

TEST_CASE("top_count rounding") {
    CHECK(top_count(5, 4950) == 248);
    CHECK(top_count(10, 190) == 19);
    CHECK(top_count(5, 190) == 10);
    CHECK(top_count(20, 3) == 1);
    CHECK(top_count(100, 7) == 7);
    CHECK(top_count(5, 0) == 0);
    CHECK_THROWS_AS(top_count(0, 10), ValidationError);
    CHECK_THROWS_AS(top_count(101, 10), ValidationError);
}

TEST_CASE("density names") {
    CHECK(density_name(kSparse5) == "sparse5");
    CHECK(density_name(kMedium10) == "medium10");
    CHECK(density_name(kDense20) == "dense20");
    CHECK(parse_density("medium10") == 10.0);
    CHECK(parse_density("7.5") == 7.5);
    CHECK_THROWS_AS(parse_density("abc"), ValidationError);
}

TEST_CASE("property: exact counts, positivity and nesting on random matrices") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = trial % 2 ? 20 : 60;
        const Matrix m = random_symmetric_unit(n, rng);
        std::vector<Edge> previous;
        for (double p : {5.0, 10.0, 20.0}) {
            const EdgeSelection s = threshold_edges(as_cm(m), p);
            CHECK(s.edges.size() == expected_edges(m, p));
            CHECK(s.edges.size() == top_count(p, s.candidates));
            for (std::size_t e = 0; e < s.edges.size(); ++e) {
                CHECK(s.edges[e].i < s.edges[e].j);
                CHECK(m(s.edges[e].i, s.edges[e].j) > 0);
                if (e) CHECK(s.edges[e - 1] < s.edges[e]);
            }
            CHECK(std::includes(s.edges.begin(), s.edges.end(), previous.begin(), previous.end()));
            previous = s.edges;
        }
    }
}

TEST_CASE("CORR features are correlation rows with a unit diagonal") {
    Rng rng(32);
    const CleanTimeSeries ts = normalize(raw_series(gaussian_matrix(176, 100, rng)));
    const ConnectivityMatrix cm = pearson_full(ts);
    const StaticGraph g = build_static(ts, cm, FeatureKind::corr, kSparse5);
    CHECK(g.features.rows() == 100);
    CHECK(g.features.cols() == 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(g.features(i, i) == 1.0);
    const StaticGraph gb = build_static(ts, cm, FeatureKind::corr_bold, kSparse5);
    CHECK(gb.features.cols() == 276);
    CHECK(gb.features(3, 100 + 7) == ts.data(7, 3));
    CHECK(gb.features(3, 5) == cm(3, 5));
    const StaticGraph bold = build_static(ts, cm, FeatureKind::bold, kSparse5);
    CHECK(bold.features.cols() == 176);
    CHECK(feature_dim(FeatureKind::corr_bold, 100, 176) == 276);
    g.validate();
}

TEST_CASE("mismatched connectivity is a validation error") {
    Rng rng(33);
    const CleanTimeSeries ts = normalize(raw_series(gaussian_matrix(20, 5, rng)));
    CHECK_THROWS_AS(build_static(ts, as_cm(Matrix::identity(4)), FeatureKind::corr, 10), ValidationError);
}

TEST_CASE("frame counts") {
    CHECK(frame_count(150, 50, 3) == 34);
    CHECK(frame_count(50, 50, 3) == 1);
    CHECK(frame_count(100, 50, 25) == 3);
}

TEST_CASE("dynamic frames sit at the expected window offsets") {
    Rng rng(34);
    const CleanTimeSeries ts = normalize(raw_series(gaussian_matrix(100, 6, rng)));
    const DynamicGraphSequence seq = build_dynamic(ts, FeatureKind::corr_bold, 50, 25, 100, 99, kMedium10);
    CHECK(seq.crop_start == 0);
    REQUIRE(seq.frames.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const ConnectivityMatrix cm = pearson_windowed(ts, 25 * k, 50);
        const CleanTimeSeries win = normalized_window(ts, 25 * k, 50);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < 6; ++j) CHECK(seq.frames[k].features(i, j) == cm(i, j));
            for (std::size_t t = 0; t < 50; ++t) CHECK(seq.frames[k].features(i, 6 + t) == win.data(t, i));
        }
        CHECK(seq.frames[k].edges == threshold_edges(cm, kMedium10).edges);
    }
    seq.validate();
}

TEST_CASE("default dynamic preset emits 34 frames from a random crop") {
    Rng rng(35);
    const CleanTimeSeries ts = normalize(raw_series(gaussian_matrix(300, 10, rng)));
    const DynamicGraphSequence a = build_dynamic(ts, FeatureKind::corr, 50, 3, 150, 1234, kMedium10);
    const DynamicGraphSequence b = build_dynamic(ts, FeatureKind::corr, 50, 3, 150, 1234, kMedium10);
    CHECK(a.frames.size() == 34);
    CHECK(a.crop_start <= 150);
    CHECK(a.crop_start == b.crop_start);
    CHECK(a.frames[5].edges == b.frames[5].edges);
    const ConnectivityMatrix last = pearson_windowed(ts, a.crop_start + 33 * 3, 50);
    CHECK(a.frames[33].features == last.values);
}

TEST_CASE("crop longer than the series is a validation error") {
    Rng rng(36);
    const CleanTimeSeries ts = normalize(raw_series(gaussian_matrix(100, 4, rng)));
    CHECK_THROWS_AS(build_dynamic(ts, FeatureKind::corr, 50, 3, 150, 1, kMedium10), ValidationError);
    CHECK_THROWS_AS(build_dynamic(ts, FeatureKind::corr, 60, 3, 50, 1, kMedium10), ValidationError);
    CHECK_THROWS_AS(build_dynamic(ts, FeatureKind::corr, 10, 0, 50, 1, kMedium10), ValidationError);
}

TEST_CASE("property: frame-count formula matches window enumeration") {
    for (std::size_t l = 2; l <= 60; ++l)
        for (std::size_t gamma = 2; gamma <= l; ++gamma)
            for (std::size_t stride = 1; stride <= 12; ++stride) {
                std::size_t windows = 0;
                for (std::size_t start = 0; start + gamma <= l; start += stride) ++windows;
                CHECK(frame_count(l, gamma, stride) == windows);
            }
}

TEST_CASE("property: relabelling ROIs permutes edges and features") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng.uniform_index(20), t = 30 + rng.uniform_index(50);
        const Matrix y = gaussian_matrix(t, n, rng);
        const auto perm = random_permutation(n, rng);
        Matrix yp(t, n);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < n; ++c) yp(r, perm[c]) = y(r, c);
        const CleanTimeSeries a = normalize(raw_series(y)), b = normalize(raw_series(yp));
        for (FeatureKind kind : {FeatureKind::corr, FeatureKind::bold}) {
            const StaticGraph ga = build_static(a, pearson_full(a), kind, 20);
            const StaticGraph gb = build_static(b, pearson_full(b), kind, 20);
            const StaticGraph mapped = permute_graph(ga, perm);
            CHECK(mapped.edges == gb.edges);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < gb.features.cols(); ++c) {
                    const std::size_t src_col = kind == FeatureKind::corr
                                                    ? static_cast<std::size_t>(std::find(perm.begin(), perm.end(), c) - perm.begin())
                                                    : c;
                    CHECK(std::abs(gb.features(i, c) - mapped.features(i, src_col)) < 1e-12);
                }
        }
    }
}

TEST_CASE("upper triangle layout") {
    const Matrix m = Matrix::from_rows({{1, 2, 3}, {2, 1, 4}, {3, 4, 1}});
    CHECK(upper_triangle(m) == std::vector<double>{2, 3, 4});
    CHECK(upper_triangle(Matrix::identity(100)).size() == 4950);
}
