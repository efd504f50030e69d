#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "braingraph/connectivity.hpp"

namespace braingraph {

struct Edge {
    std::uint32_t i = 0;  // i < j
    std::uint32_t j = 0;

    auto operator<=>(const Edge&) const = default;
};

enum class FeatureKind { corr, bold, corr_bold };

FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind kind);
// Feature width for n ROIs and a series (or window) of `length` timepoints.
std::size_t feature_dim(FeatureKind kind, std::size_t n, std::size_t length);

// Named densities: sparse = top 5%, medium = top 10%, dense = top 20%.
inline constexpr double kSparse5 = 5.0;
inline constexpr double kMedium10 = 10.0;
inline constexpr double kDense20 = 20.0;
std::string density_name(double top_percent);  // "sparse5", "medium10", "dense20" or "top<p>"
double parse_density(const std::string& name);  // accepts preset names or a number

// Attributed undirected graph G = (V, E, X) for one scan or window.
struct StaticGraph {
    std::size_t n = 0;
    std::vector<Edge> edges;  // sorted, i < j, unique
    Matrix features;          // n x d
    std::optional<Label> label;
    FeatureKind feature_kind = FeatureKind::corr;
    double top_percent = kSparse5;
    std::string subject_id;

    // Checks edge ordering/uniqueness/range and the feature row count.
    void validate() const;
};

struct EdgeSelection {
    std::vector<Edge> edges;
    std::size_t candidates = 0;  // positive off-diagonal upper-triangle entries
    double cutoff = 0.0;         // smallest kept correlation (0 when nothing kept)

    bool no_candidates() const noexcept { return candidates == 0; }
};

// Number of entries to keep from `candidates` positive values at `top_percent`:
// ceil(top_percent / 100 * candidates), with float noise around integers removed.
std::size_t top_count(double top_percent, std::size_t candidates);

// Proportional thresholding over strictly positive upper-triangle entries;
// every entry tied with the cutoff value is kept as well.
EdgeSelection threshold_edges(const ConnectivityMatrix& cm, double top_percent);

Matrix node_features(const CleanTimeSeries& ts, const ConnectivityMatrix& cm, FeatureKind kind);

StaticGraph build_static(const CleanTimeSeries& ts, const ConnectivityMatrix& cm, FeatureKind kind,
                         double top_percent);

struct DynamicGraphSequence {
    std::vector<StaticGraph> frames;
    std::size_t gamma = 50;
    std::size_t stride = 3;
    std::size_t crop_length = 150;
    std::size_t crop_start = 0;
    std::string subject_id;
    std::optional<Label> label;
    FeatureKind feature_kind = FeatureKind::corr;
    double top_percent = kMedium10;

    void validate() const;
};

// floor((l - gamma) / stride) + 1
std::size_t frame_count(std::size_t crop_length, std::size_t gamma, std::size_t stride);

// Crops [crop_start, crop_start + l) with crop_start uniform on [0, T - l]
// drawn from crop_seed, then builds one graph per window
// [crop_start + k * stride, + gamma), each window normalised on its own.
DynamicGraphSequence build_dynamic(const CleanTimeSeries& ts, FeatureKind kind, std::size_t gamma,
                                   std::size_t stride, std::size_t crop_length, std::uint64_t crop_seed,
                                   double top_percent);

// Upper triangle (i < j) of a correlation matrix, row by row: n(n-1)/2 values.
std::vector<double> upper_triangle(const Matrix& square);

}  // namespace braingraph
