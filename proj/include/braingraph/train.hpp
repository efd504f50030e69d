#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "braingraph/dataset.hpp"
#include "braingraph/io.hpp"
#include "braingraph/models.hpp"
#include "braingraph/nn.hpp"

namespace braingraph {

struct TrainConfig {
    std::size_t epochs = 100;
    double lr = 1e-5;
    double weight_decay = 5e-4;
    double dropout = 0.5;
    std::uint64_t seed = 123;
    nn::LossKind loss = nn::LossKind::cross_entropy;
    ModelKind model = ModelKind::gnnstar;
    std::filesystem::path dataset_path;
    SplitFractions fractions;

    // Architecture knobs forwarded to ModelConfig.
    std::size_t num_layers = 3;
    std::size_t hidden_dim = 64;
    Readout readout = Readout::sort_pool;
    std::size_t sort_k = 0;
    std::vector<std::size_t> mlp_hidden{64};

    // 0 = one full-batch step per epoch.
    std::size_t batch_size = 0;
    // Regression targets rescaled to [0, 1] with the training-set range.
    bool normalize_targets = true;

    // 100 epochs / lr 1e-5 with cross entropy, or 50 epochs / lr 1e-3 with MAE.
    static TrainConfig defaults_for(const TaskKind& task);
    void validate() const;
};

struct TargetScaling {
    bool enabled = false;
    double lo = 0.0;
    double hi = 1.0;

    double apply(double y) const { return enabled ? (y - lo) / (hi - lo) : y; }
};

struct SplitScore {
    double metric = 0.0;  // accuracy or MAE
    double loss = 0.0;
    std::size_t count = 0;
};

struct Metrics {
    bool classification = true;
    SplitScore train;
    SplitScore val;
    SplitScore test;
    // Eval-mode (no dropout) mean training loss before the first update and
    // after every epoch, so loss_curve.size() == epochs + 1.
    std::vector<double> loss_curve;
    std::vector<double> val_curve;  // validation metric, same indexing
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
    std::size_t peak_memory_bytes = 0;

    const char* metric_name() const { return classification ? "accuracy" : "mae"; }
};

struct TrainResult {
    Metrics metrics;
    ModelConfig model;
    nn::ParamStore params;  // best-validation checkpoint
    SplitSpec split;
    TargetScaling scaling;
    TaskKind task;
};

// Builds the model configuration a dataset and train config imply.
ModelConfig model_config_for(const TrainConfig& config, const GraphDataset& ds);

// Deterministic for a fixed config. Throws NumericalError naming the epoch and
// graph when a loss turns non-finite.
TrainResult train(const TrainConfig& config, const GraphDataset& ds, const SplitSpec& split);
// Stratified split from config.seed and config.fractions.
TrainResult train(const TrainConfig& config, const GraphDataset& ds);
// Loads config.dataset_path.
TrainResult train(const TrainConfig& config);

struct Checkpoint {
    ModelConfig model;
    nn::ParamStore params;
    TargetScaling scaling;
    TaskKind task;
};

// params.json, params.bin and model_card.json under dir.
void save_checkpoint(const TrainResult& result, const TrainConfig& config, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Dropout disabled. A parameter layout that does not fit the model config is a
// ValidationError naming the tensor.
SplitScore evaluate(const Checkpoint& ckpt, const GraphDataset& ds, const std::vector<std::size_t>& indices);
Metrics evaluate(const Checkpoint& ckpt, const GraphDataset& ds, const SplitSpec& split);

// Builds a model from ckpt.model and installs ckpt.params after the layout check.
std::unique_ptr<Model> restore_model(const Checkpoint& ckpt);

std::string metrics_to_json(const Metrics& m);

// ---- Feature/ROI/density probe ----
struct ProbeGrid {
    std::vector<FeatureKind> features{FeatureKind::corr, FeatureKind::bold, FeatureKind::corr_bold};
    std::vector<std::size_t> rois{20, 50};
    std::vector<double> densities{kSparse5, kMedium10, kDense20};

    std::size_t cells() const noexcept { return features.size() * rois.size() * densities.size(); }
};

struct ProbeRow {
    FeatureKind feature = FeatureKind::corr;
    std::size_t rois = 0;
    double density = 0.0;
    std::size_t feature_dim = 0;
    double train_metric = 0.0;
    double val_metric = 0.0;
    double test_metric = 0.0;
    std::size_t best_epoch = 0;
};

struct ProbeReport {
    bool classification = true;
    std::vector<ProbeRow> rows;  // grid order: feature, then rois, then density

    double mean_test_metric(FeatureKind feature) const;
};

// Returns the cleaned corpus for a given ROI count.
using CorpusProvider = std::function<std::vector<CleanTimeSeries>(std::size_t rois)>;

// Cells run in parallel; rows come back in grid order.
ProbeReport run_probe(const ProbeGrid& grid, const TrainConfig& base, const CorpusProvider& corpus);
// Planted synthetic corpus with `spec` and its ROI count replaced per cell.
ProbeReport run_probe(const ProbeGrid& grid, const TrainConfig& base, const SyntheticSpec& spec);

std::string probe_to_json(const ProbeReport& report);
std::string probe_to_table(const ProbeReport& report);
// report.json and report.txt
void save_probe_report(const ProbeReport& report, const std::filesystem::path& dir);

}  // namespace braingraph
