#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "braingraph/graph.hpp"
#include "braingraph/matrix.hpp"
#include "braingraph/random.hpp"

// Fixed layer set with hand-written forward and backward passes. Every
// backward routine returns or accumulates exact gradients of a scalar loss
// given the gradient with respect to the layer output.

namespace braingraph::nn {

using Tensor2 = Matrix;

// Named weights in insertion order. Gradients and optimiser moments use
// stores with the same names and shapes.
class ParamStore {
public:
    Tensor2& add(const std::string& name, Tensor2 value);
    Tensor2& at(const std::string& name);
    const Tensor2& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const noexcept { return items_.size(); }
    const std::string& name(std::size_t i) const { return items_[i].first; }
    Tensor2& value(std::size_t i) { return items_[i].second; }
    const Tensor2& value(std::size_t i) const { return items_[i].second; }

    std::size_t scalar_count() const;
    ParamStore zeros_like() const;
    void set_zero();
    bool all_finite() const;
    // Same names in the same order with the same shapes.
    bool same_layout(const ParamStore& other) const;

    bool operator==(const ParamStore& other) const { return items_ == other.items_; }

    std::uint64_t init_seed = 0;

private:
    std::vector<std::pair<std::string, Tensor2>> items_;
    std::map<std::string, std::size_t> index_;
};

using ModelParams = ParamStore;

// Uniform Glorot initialisation: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor2 glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// A_hat = D^-1/2 (A + I) D^-1/2 in CSR form.
class NormalizedAdjacency {
public:
    NormalizedAdjacency() = default;
    static NormalizedAdjacency from_edges(std::size_t n, const std::vector<Edge>& edges);

    std::size_t nodes() const noexcept { return n_; }
    // A_hat * X. A_hat is symmetric, so this also serves as A_hat^T * X.
    Tensor2 multiply(const Tensor2& x) const;
    Tensor2 dense() const;

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::uint32_t> cols_;
    std::vector<double> vals_;
};

Tensor2 relu(const Tensor2& x);
// dL/dx for y = relu(pre).
Tensor2 relu_backward(const Tensor2& pre, const Tensor2& dy);

// y = x W + 1 b (b is 1 x out, broadcast over rows).
Tensor2 affine(const Tensor2& x, const Tensor2& w, const Tensor2& b);
// Adds 1 x cols column sums of dy into db.
void accumulate_bias_grad(const Tensor2& dy, Tensor2& db);

// ---- GCN layer: ReLU(A_hat X W) ----
struct GcnCache {
    Tensor2 ax;   // A_hat X
    Tensor2 pre;  // A_hat X W
};
struct GcnGrads {
    Tensor2 dx;
    Tensor2 dw;
};
Tensor2 gcn_forward(const NormalizedAdjacency& adj, const Tensor2& x, const Tensor2& w, GcnCache* cache = nullptr);
GcnGrads gcn_backward(const NormalizedAdjacency& adj, const Tensor2& w, const GcnCache& cache, const Tensor2& dout);

// ---- MLP: affine -> ReLU -> dropout ... -> affine ----
// dims = {in, hidden..., out}; parameters "<prefix>.w<i>" and "<prefix>.b<i>".
struct MlpShape {
    std::string prefix;
    std::vector<std::size_t> dims;

    std::size_t layers() const noexcept { return dims.size() - 1; }
};
void init_mlp(ParamStore& params, const MlpShape& shape, Rng& rng);

struct MlpCache {
    std::vector<Tensor2> inputs;  // input to each affine layer
    std::vector<Tensor2> pre;     // pre-activation of each hidden layer
    std::vector<Tensor2> masks;   // inverted-dropout masks (empty when inactive)
};
// Throws ValidationError unless dropout_rate is in [0, 1). Dropout is only
// active when `train` is set; rng must then be non-null.
Tensor2 mlp_forward(const Tensor2& x, const ParamStore& params, const MlpShape& shape, double dropout_rate, bool train,
                    Rng* rng, MlpCache* cache = nullptr);
// Accumulates parameter gradients into grads; returns dL/dx.
Tensor2 mlp_backward(const ParamStore& params, const MlpShape& shape, const MlpCache& cache, const Tensor2& dout,
                     ParamStore& grads);

// ---- Sort pooling ----
struct SortPoolCache {
    std::vector<std::size_t> order;  // selected node per output slot (min(k, n) entries)
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t k = 0;
};
// Sorts nodes by their last channel, descending (ties keep node order), keeps
// the first min(k, n) rows, zero-pads to k rows and flattens to 1 x (k * d).
Tensor2 sort_pool(const Tensor2& h, std::size_t k, SortPoolCache* cache = nullptr);
Tensor2 sort_pool_backward(const SortPoolCache& cache, const Tensor2& dout);

Tensor2 mean_rows(const Tensor2& h);  // 1 x d
Tensor2 mean_rows_backward(std::size_t n, const Tensor2& dout);

// ---- Single-head scaled dot-product self-attention ----
// out = softmax(Q K^T / sqrt(d_k)) V with Q = S' Wq, K = S' Wk, V = S' Wv and
// S' = S + PE (fixed sinusoidal encoding) when positional encoding is on.
Tensor2 sinusoidal_encoding(std::size_t length, std::size_t dim);
Tensor2 softmax_rows(const Tensor2& x);

struct AttentionCache {
    Tensor2 input;  // S'
    Tensor2 q, k, v;
    Tensor2 weights;  // softmax output
    double scale = 1.0;
};
struct AttentionGrads {
    Tensor2 ds;
    Tensor2 dwq, dwk, dwv;
};
Tensor2 attention_forward(const Tensor2& s, const Tensor2& wq, const Tensor2& wk, const Tensor2& wv,
                          bool positional_encoding, AttentionCache* cache = nullptr);
AttentionGrads attention_backward(const Tensor2& wq, const Tensor2& wk, const Tensor2& wv, const AttentionCache& cache,
                                  const Tensor2& dout);

// ---- Losses ----
enum class LossKind { cross_entropy, mae };
LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

struct LossResult {
    double loss = 0.0;
    Tensor2 grad;  // dL/dpred, same shape as pred
};
// Stable log-sum-exp over a 1 x C row of logits.
LossResult cross_entropy(const Tensor2& logits, std::int64_t target);
// Mean absolute error over all entries; the subgradient at zero is 0.
LossResult mean_absolute_error(const Tensor2& pred, const Tensor2& target);

// ---- Adam with decoupled weight decay ----
struct AdamState {
    ParamStore m;
    ParamStore v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const ParamStore& params);
};
// p <- p - lr*wd*p, then the bias-corrected moment update.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr, double weight_decay);

// ---- Finite-difference gradient checking ----
// Returns the loss; when grads is non-null it must also fill analytic gradients.
using LossClosure = std::function<double(const ParamStore& params, ParamStore* grads)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    std::size_t coords_per_param = 32;  // every coordinate when the tensor is smaller
    std::uint64_t seed = 0;
    // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
    double abs_floor = 1e-4;
};

struct ParamCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t coords = 0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double max_rel_error = 0.0;
    double step = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central differences on a random subsample of coordinates. Throws
// NumericalError when the loss is non-finite.
GradCheckReport grad_check(const LossClosure& closure, ParamStore params, const GradCheckOptions& options = {});

// ---- Checkpoints: params.json manifest + params.bin (raw f64 blobs) ----
void save_params(const ParamStore& params, const std::filesystem::path& dir, const std::string& extra_json = "{}");
ParamStore load_params(const std::filesystem::path& dir);

}  // namespace braingraph::nn
