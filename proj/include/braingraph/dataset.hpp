#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "braingraph/graph.hpp"
#include "braingraph/preprocess.hpp"

namespace braingraph {

struct TaskKind {
    enum class Kind { classification, regression };
    Kind kind = Kind::classification;
    std::size_t num_classes = 2;  // ignored for regression

    static TaskKind classification(std::size_t classes) { return {Kind::classification, classes}; }
    static TaskKind regression() { return {Kind::regression, 0}; }
    bool is_classification() const noexcept { return kind == Kind::classification; }
};

enum class GraphKind { static_graph, dynamic_sequence };

struct DatasetProvenance {
    FeatureKind feature = FeatureKind::corr;
    double threshold_percent = kSparse5;
    std::size_t rois = 0;
    std::string pipeline_version;
    // Dynamic datasets only.
    std::size_t gamma = 0;
    std::size_t stride = 0;
    std::size_t crop_length = 0;
    std::size_t frames_per_subject = 0;
};

struct GraphDataset {
    std::string name;
    TaskKind task;
    GraphKind kind = GraphKind::static_graph;
    std::vector<StaticGraph> graphs;              // kind == static_graph
    std::vector<DynamicGraphSequence> sequences;  // kind == dynamic_sequence
    DatasetProvenance provenance;

    std::size_t size() const noexcept { return kind == GraphKind::static_graph ? graphs.size() : sequences.size(); }
    std::optional<Label> label(std::size_t index) const;
    const std::string& subject_id(std::size_t index) const;

    // Homogeneous task, labels present and in range, every graph valid.
    // Failures name the graph index.
    void validate() const;
};

// Classification with max + 1 classes when every label is a class index,
// regression when every label is a real value. Missing or mixed labels are a
// ValidationError.
TaskKind infer_task(const std::vector<std::optional<Label>>& labels);

// One static graph per subject from its full-scan correlation matrix.
GraphDataset make_static_dataset(const std::vector<CleanTimeSeries>& series, FeatureKind feature, double top_percent,
                                 const std::string& name = "static");
// One sequence per subject; the crop seed is derive_seed(seed, subject_id).
GraphDataset make_dynamic_dataset(const std::vector<CleanTimeSeries>& series, FeatureKind feature, double top_percent,
                                  std::size_t gamma, std::size_t stride, std::size_t crop_length, std::uint64_t seed,
                                  const std::string& name = "dynamic");

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// Writes manifest.json and graphs/NNNNNN.bin under dir; returns the manifest path.
std::filesystem::path save_dataset(const GraphDataset& ds, const std::filesystem::path& dir);
GraphDataset load_dataset(const std::filesystem::path& dir);

// Blob codecs, exposed for tests and external tooling.
std::string encode_static_blob(const StaticGraph& g);
StaticGraph decode_static_blob(const std::string& bytes, std::size_t graph_index);
std::string encode_dynamic_blob(const DynamicGraphSequence& seq);
DynamicGraphSequence decode_dynamic_blob(const std::string& bytes, std::size_t graph_index);

struct SplitFractions {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

struct SplitSpec {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 123;
    SplitFractions fractions;

    std::size_t total() const noexcept { return train.size() + val.size() + test.size(); }
};

// Per class: shuffle the member indices with the seeded generator, then
// allocate train/val/test counts by largest remainder. num_classes == 0 infers
// max label + 1. A class with no samples is a ValidationError.
SplitSpec stratified_split(const std::vector<std::int64_t>& classes, std::size_t num_classes,
                           const SplitFractions& fractions, std::uint64_t seed);

// Regression targets are stratified on `bins` equal-count quantile bins.
SplitSpec stratified_split_regression(const std::vector<double>& targets, const SplitFractions& fractions,
                                      std::uint64_t seed, std::size_t bins = 4);

// Dispatches on the dataset's task kind.
SplitSpec stratified_split(const GraphDataset& ds, const SplitFractions& fractions, std::uint64_t seed);

// Largest-remainder allocation of `count` items to the three fractions.
std::array<std::size_t, 3> allocate_counts(std::size_t count, const SplitFractions& fractions);

// splits/seed<k>.json
std::filesystem::path save_split(const SplitSpec& split, const std::filesystem::path& dataset_dir);
SplitSpec load_split(const std::filesystem::path& path);

// Age brackets 22-25, 26-30, 31-35 map to classes 0, 1, 2; other ages are dropped.
std::optional<std::int64_t> age_bracket(double age_years);

}  // namespace braingraph
