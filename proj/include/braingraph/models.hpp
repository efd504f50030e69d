#pragma once

#include <memory>
#include <string>
#include <vector>

#include "braingraph/graph.hpp"
#include "braingraph/nn.hpp"

namespace braingraph {

enum class ModelKind { gcn, gnnstar, mlp, dyn };
ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

enum class Readout { sort_pool, mean };

struct ModelConfig {
    ModelKind kind = ModelKind::gnnstar;
    std::size_t input_dim = 0;   // node feature width
    std::size_t num_nodes = 0;   // ROI count (sort-pool k and MLP input width depend on it)
    std::size_t outputs = 2;     // classes, or 1 for regression
    std::size_t num_layers = 3;
    std::size_t hidden_dim = 64;
    Readout readout = Readout::sort_pool;
    std::size_t sort_k = 0;                   // 0 -> min(num_nodes, 64)
    std::vector<std::size_t> mlp_hidden{64};  // head hidden widths
    std::vector<std::size_t> baseline_hidden{512, 256, 128};
    double dropout = 0.5;
    bool residual = true;             // GNN* residual branch
    bool positional_encoding = true;  // dynamic model
    std::uint64_t init_seed = 123;

    std::size_t resolved_sort_k() const;
    void validate() const;
};

// Either a static graph or a dynamic sequence, depending on the model.
struct GraphSample {
    const StaticGraph* graph = nullptr;
    const DynamicGraphSequence* sequence = nullptr;
};

// Forward caches intermediate values for the next backward call, so an
// instance must not be shared between threads.
class Model {
public:
    virtual ~Model() = default;

    // 1 x outputs. With `train` set, dropout draws from rng.
    virtual nn::Tensor2 forward(const GraphSample& sample, bool train, Rng* rng) = 0;
    // Accumulates dL/dparams of the most recent forward into grads.
    virtual void backward(const nn::Tensor2& dout, nn::ParamStore& grads) = 0;
    // Graph-level embedding (h_G or h_dyn) of the most recent forward.
    virtual const nn::Tensor2& embedding() const = 0;

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return config_; }

protected:
    explicit Model(ModelConfig config) : config_(std::move(config)) {}
    ModelConfig config_;
    nn::ParamStore params_;
};

// Builds and initialises (uniform Glorot, seeded by config.init_seed).
std::unique_ptr<Model> make_model(const ModelConfig& config);

// Shared GNN* trunk: H_l = ReLU(A_hat H_{l-1} W_l) + H_{l-1} R_l, where R_l is
// learned when the width changes and the identity otherwise; the node
// representation is concat(H_1, ..., H_L).
class GnnStarTrunk {
public:
    GnnStarTrunk() = default;
    GnnStarTrunk(std::string prefix, std::size_t input_dim, std::size_t hidden, std::size_t layers, bool residual);

    void init(nn::ParamStore& params, Rng& rng) const;
    std::size_t output_dim() const noexcept { return hidden_ * layers_; }

    struct Cache {
        nn::NormalizedAdjacency adj;
        std::vector<nn::Tensor2> inputs;  // H_{l-1}
        std::vector<nn::GcnCache> gcn;
    };
    nn::Tensor2 forward(const StaticGraph& g, const nn::ParamStore& params, Cache& cache) const;
    // Accumulates parameter gradients from dL/d(concat).
    void backward(const nn::ParamStore& params, const Cache& cache, const nn::Tensor2& dconcat,
                  nn::ParamStore& grads) const;

private:
    bool has_projection(std::size_t layer) const;

    std::string prefix_;
    std::size_t input_dim_ = 0;
    std::size_t hidden_ = 0;
    std::size_t layers_ = 0;
    bool residual_ = true;
};

// Upper-triangle correlation vector used by the MLP baseline. CORR and
// CORR_BOLD graphs read it from the first n feature columns; BOLD graphs
// correlate their feature rows.
std::vector<double> correlation_features(const StaticGraph& g);

}  // namespace braingraph
