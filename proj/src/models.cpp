#include "braingraph/models.hpp"

#include <algorithm>

#include "braingraph/connectivity.hpp"
#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"

namespace braingraph {

using nn::ParamStore;
using nn::Tensor2;

ModelKind parse_model_kind(const std::string& name) {
    if (name == "gcn") return ModelKind::gcn;
    if (name == "gnnstar" || name == "gnn*") return ModelKind::gnnstar;
    if (name == "mlp") return ModelKind::mlp;
    if (name == "dyn" || name == "dynamic") return ModelKind::dyn;
    throw ValidationError("unknown model '" + name + "' (expected gcn, gnnstar, mlp or dyn)");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::gcn: return "gcn";
        case ModelKind::gnnstar: return "gnnstar";
        case ModelKind::mlp: return "mlp";
        case ModelKind::dyn: return "dyn";
    }
    return "?";
}

std::size_t ModelConfig::resolved_sort_k() const { return sort_k ? sort_k : std::min<std::size_t>(num_nodes, 64); }

void ModelConfig::validate() const {
    if (num_layers < 1) throw ValidationError("model needs num_layers >= 1");
    if (hidden_dim < 1) throw ValidationError("model needs hidden_dim >= 1");
    if (outputs < 1) throw ValidationError("model needs at least one output");
    if (num_nodes < 1) throw ValidationError("model needs num_nodes >= 1");
    if (kind != ModelKind::mlp && input_dim < 1) throw ValidationError("model needs input_dim >= 1");
    if (kind == ModelKind::mlp && num_nodes < 2) throw ValidationError("MLP baseline needs at least 2 ROIs");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

std::vector<double> correlation_features(const StaticGraph& g) {
    if (g.feature_kind == FeatureKind::bold) return upper_triangle(correlation_matrix(g.features.transposed()).values);
    if (g.features.cols() < g.n) throw DimensionError("graph features narrower than the node count");
    std::vector<double> out;
    out.reserve(g.n * (g.n - 1) / 2);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = i + 1; j < g.n; ++j) out.push_back(g.features(i, j));
    return out;
}

// ------------------------------------------------------------------ trunk

GnnStarTrunk::GnnStarTrunk(std::string prefix, std::size_t input_dim, std::size_t hidden, std::size_t layers,
                           bool residual)
    : prefix_(std::move(prefix)), input_dim_(input_dim), hidden_(hidden), layers_(layers), residual_(residual) {}

bool GnnStarTrunk::has_projection(std::size_t layer) const {
    return residual_ && layer == 0 && input_dim_ != hidden_;
}

void GnnStarTrunk::init(ParamStore& params, Rng& rng) const {
    for (std::size_t l = 0; l < layers_; ++l) {
        const std::size_t in = l == 0 ? input_dim_ : hidden_;
        params.add(prefix_ + ".w" + std::to_string(l), nn::glorot_uniform(in, hidden_, rng));
        if (has_projection(l)) params.add(prefix_ + ".r" + std::to_string(l), nn::glorot_uniform(in, hidden_, rng));
    }
}

Tensor2 GnnStarTrunk::forward(const StaticGraph& g, const ParamStore& params, Cache& cache) const {
    if (g.features.cols() != input_dim_)
        throw DimensionError("graph feature width " + std::to_string(g.features.cols()) + " does not match model input " +
                             std::to_string(input_dim_));
    cache.adj = nn::NormalizedAdjacency::from_edges(g.n, g.edges);
    cache.inputs.assign(layers_, Tensor2{});
    cache.gcn.assign(layers_, nn::GcnCache{});
    Tensor2 concat(g.n, output_dim());
    Tensor2 h = g.features;
    for (std::size_t l = 0; l < layers_; ++l) {
        const std::string idx = std::to_string(l);
        Tensor2 next = nn::gcn_forward(cache.adj, h, params.at(prefix_ + ".w" + idx), &cache.gcn[l]);
        if (residual_) next += has_projection(l) ? kernels::matmul(h, params.at(prefix_ + ".r" + idx)) : h;
        for (std::size_t v = 0; v < g.n; ++v)
            std::copy(next.row(v).begin(), next.row(v).end(), concat.data() + v * output_dim() + l * hidden_);
        cache.inputs[l] = std::move(h);
        h = std::move(next);
    }
    return concat;
}

void GnnStarTrunk::backward(const ParamStore& params, const Cache& cache, const Tensor2& dconcat,
                            ParamStore& grads) const {
    const std::size_t n = dconcat.rows();
    Tensor2 carry(n, hidden_);  // gradient reaching H_l from layer l + 1
    for (std::size_t l = layers_; l-- > 0;) {
        const std::string idx = std::to_string(l);
        Tensor2 dh = carry;
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t c = 0; c < hidden_; ++c) dh(v, c) += dconcat(v, l * hidden_ + c);
        const Tensor2& w = params.at(prefix_ + ".w" + idx);
        nn::GcnGrads g = nn::gcn_backward(cache.adj, w, cache.gcn[l], dh);
        grads.at(prefix_ + ".w" + idx) += g.dw;
        if (residual_) {
            if (has_projection(l)) {
                const Tensor2& r = params.at(prefix_ + ".r" + idx);
                grads.at(prefix_ + ".r" + idx) += kernels::matmul_tn(cache.inputs[l], dh);
                g.dx += kernels::matmul_nt(dh, r);
            } else {
                g.dx += dh;
            }
        }
        if (l == 0) break;  // input features are not trained
        carry = std::move(g.dx);
    }
}

namespace {

// ------------------------------------------------------------------ GNN*

class GnnStarModel final : public Model {
public:
    explicit GnnStarModel(const ModelConfig& c)
        : Model(c), trunk_("gnn", c.input_dim, c.hidden_dim, c.num_layers, c.residual) {
        const std::size_t readout_dim =
            c.readout == Readout::mean ? trunk_.output_dim() : trunk_.output_dim() * c.resolved_sort_k();
        head_.prefix = "head";
        head_.dims.push_back(readout_dim);
        head_.dims.insert(head_.dims.end(), c.mlp_hidden.begin(), c.mlp_hidden.end());
        head_.dims.push_back(c.outputs);
        Rng rng(c.init_seed);
        trunk_.init(params_, rng);
        nn::init_mlp(params_, head_, rng);
        params_.init_seed = c.init_seed;
    }

    Tensor2 forward(const GraphSample& s, bool train, Rng* rng) override {
        if (!s.graph) throw ValidationError("GNN* needs a static graph");
        n_ = s.graph->n;
        const Tensor2 concat = trunk_.forward(*s.graph, params_, trunk_cache_);
        embedding_ = config_.readout == Readout::mean ? nn::mean_rows(concat)
                                                      : nn::sort_pool(concat, config_.resolved_sort_k(), &pool_cache_);
        return nn::mlp_forward(embedding_, params_, head_, config_.dropout, train, rng, &head_cache_);
    }

    void backward(const Tensor2& dout, ParamStore& grads) override {
        const Tensor2 demb = nn::mlp_backward(params_, head_, head_cache_, dout, grads);
        const Tensor2 dconcat = config_.readout == Readout::mean ? nn::mean_rows_backward(n_, demb)
                                                                 : nn::sort_pool_backward(pool_cache_, demb);
        trunk_.backward(params_, trunk_cache_, dconcat, grads);
    }

    const Tensor2& embedding() const override { return embedding_; }

private:
    GnnStarTrunk trunk_;
    nn::MlpShape head_;
    GnnStarTrunk::Cache trunk_cache_;
    nn::SortPoolCache pool_cache_;
    nn::MlpCache head_cache_;
    Tensor2 embedding_;
    std::size_t n_ = 0;
};

// ------------------------------------------------------------------- GCN

class GcnModel final : public Model {
public:
    explicit GcnModel(const ModelConfig& c) : Model(c) {
        Rng rng(c.init_seed);
        for (std::size_t l = 0; l < c.num_layers; ++l)
            params_.add("gcn.w" + std::to_string(l),
                        nn::glorot_uniform(l == 0 ? c.input_dim : c.hidden_dim, c.hidden_dim, rng));
        head_.prefix = "head";
        head_.dims.push_back(c.readout == Readout::mean ? c.hidden_dim : c.hidden_dim * c.resolved_sort_k());
        head_.dims.insert(head_.dims.end(), c.mlp_hidden.begin(), c.mlp_hidden.end());
        head_.dims.push_back(c.outputs);
        nn::init_mlp(params_, head_, rng);
        params_.init_seed = c.init_seed;
    }

    Tensor2 forward(const GraphSample& s, bool train, Rng* rng) override {
        if (!s.graph) throw ValidationError("GCN needs a static graph");
        if (s.graph->features.cols() != config_.input_dim)
            throw DimensionError("graph feature width " + std::to_string(s.graph->features.cols()) +
                                 " does not match model input " + std::to_string(config_.input_dim));
        n_ = s.graph->n;
        adj_ = nn::NormalizedAdjacency::from_edges(s.graph->n, s.graph->edges);
        caches_.assign(config_.num_layers, nn::GcnCache{});
        Tensor2 h = s.graph->features;
        for (std::size_t l = 0; l < config_.num_layers; ++l)
            h = nn::gcn_forward(adj_, h, params_.at("gcn.w" + std::to_string(l)), &caches_[l]);
        embedding_ = config_.readout == Readout::mean ? nn::mean_rows(h)
                                                      : nn::sort_pool(h, config_.resolved_sort_k(), &pool_cache_);
        return nn::mlp_forward(embedding_, params_, head_, config_.dropout, train, rng, &head_cache_);
    }

    void backward(const Tensor2& dout, ParamStore& grads) override {
        const Tensor2 demb = nn::mlp_backward(params_, head_, head_cache_, dout, grads);
        Tensor2 dh = config_.readout == Readout::mean ? nn::mean_rows_backward(n_, demb)
                                                      : nn::sort_pool_backward(pool_cache_, demb);
        for (std::size_t l = config_.num_layers; l-- > 0;) {
            const std::string name = "gcn.w" + std::to_string(l);
            nn::GcnGrads g = nn::gcn_backward(adj_, params_.at(name), caches_[l], dh);
            grads.at(name) += g.dw;
            dh = std::move(g.dx);
        }
    }

    const Tensor2& embedding() const override { return embedding_; }

private:
    nn::MlpShape head_;
    nn::NormalizedAdjacency adj_;
    std::vector<nn::GcnCache> caches_;
    nn::SortPoolCache pool_cache_;
    nn::MlpCache head_cache_;
    Tensor2 embedding_;
    std::size_t n_ = 0;
};

// ------------------------------------------------------------ MLP baseline

class MlpModel final : public Model {
public:
    explicit MlpModel(const ModelConfig& c) : Model(c) {
        shape_.prefix = "mlp";
        shape_.dims.push_back(c.num_nodes * (c.num_nodes - 1) / 2);
        shape_.dims.insert(shape_.dims.end(), c.baseline_hidden.begin(), c.baseline_hidden.end());
        shape_.dims.push_back(c.outputs);
        Rng rng(c.init_seed);
        nn::init_mlp(params_, shape_, rng);
        params_.init_seed = c.init_seed;
    }

    Tensor2 forward(const GraphSample& s, bool train, Rng* rng) override {
        if (!s.graph) throw ValidationError("MLP baseline needs a static graph");
        const std::vector<double> feats = correlation_features(*s.graph);
        embedding_ = Tensor2(1, feats.size(), feats);
        return forward_features(embedding_, train, rng);
    }

    Tensor2 forward_features(const Tensor2& x, bool train, Rng* rng) {
        return nn::mlp_forward(x, params_, shape_, config_.dropout, train, rng, &cache_);
    }

    void backward(const Tensor2& dout, ParamStore& grads) override {
        nn::mlp_backward(params_, shape_, cache_, dout, grads);
    }

    const Tensor2& embedding() const override { return embedding_; }

private:
    nn::MlpShape shape_;
    nn::MlpCache cache_;
    Tensor2 embedding_;
};

// ------------------------------------------------- dynamic GNN + attention

class DynModel final : public Model {
public:
    explicit DynModel(const ModelConfig& c)
        : Model(c), trunk_("gnn", c.input_dim, c.hidden_dim, c.num_layers, c.residual) {
        Rng rng(c.init_seed);
        trunk_.init(params_, rng);
        const std::size_t d = trunk_.output_dim();
        params_.add("attn.wq", nn::glorot_uniform(d, d, rng));
        params_.add("attn.wk", nn::glorot_uniform(d, d, rng));
        params_.add("attn.wv", nn::glorot_uniform(d, d, rng));
        head_.prefix = "head";
        head_.dims.push_back(d);
        head_.dims.insert(head_.dims.end(), c.mlp_hidden.begin(), c.mlp_hidden.end());
        head_.dims.push_back(c.outputs);
        nn::init_mlp(params_, head_, rng);
        params_.init_seed = c.init_seed;
    }

    Tensor2 forward(const GraphSample& s, bool train, Rng* rng) override {
        if (!s.sequence) throw ValidationError("dynamic model needs a graph sequence");
        const auto& frames = s.sequence->frames;
        if (frames.empty()) throw ValidationError("dynamic model: empty graph sequence");
        const std::size_t d = trunk_.output_dim();
        frame_caches_.assign(frames.size(), GnnStarTrunk::Cache{});
        frame_nodes_.assign(frames.size(), 0);
        Tensor2 seq(frames.size(), d);
        for (std::size_t t = 0; t < frames.size(); ++t) {
            const Tensor2 emb = nn::mean_rows(trunk_.forward(frames[t], params_, frame_caches_[t]));
            std::copy(emb.data(), emb.data() + d, seq.data() + t * d);
            frame_nodes_[t] = frames[t].n;
        }
        attended_ = nn::attention_forward(seq, params_.at("attn.wq"), params_.at("attn.wk"), params_.at("attn.wv"),
                                          config_.positional_encoding, &attn_cache_);
        embedding_ = nn::mean_rows(attended_);
        return nn::mlp_forward(embedding_, params_, head_, config_.dropout, train, rng, &head_cache_);
    }

    void backward(const Tensor2& dout, ParamStore& grads) override {
        const Tensor2 demb = nn::mlp_backward(params_, head_, head_cache_, dout, grads);
        const Tensor2 dattended = nn::mean_rows_backward(attended_.rows(), demb);
        const nn::AttentionGrads ag = nn::attention_backward(params_.at("attn.wq"), params_.at("attn.wk"),
                                                             params_.at("attn.wv"), attn_cache_, dattended);
        grads.at("attn.wq") += ag.dwq;
        grads.at("attn.wk") += ag.dwk;
        grads.at("attn.wv") += ag.dwv;
        for (std::size_t t = 0; t < frame_caches_.size(); ++t) {
            Tensor2 drow(1, ag.ds.cols());
            std::copy(ag.ds.row(t).begin(), ag.ds.row(t).end(), drow.data());
            trunk_.backward(params_, frame_caches_[t], nn::mean_rows_backward(frame_nodes_[t], drow), grads);
        }
    }

    const Tensor2& embedding() const override { return embedding_; }
    const Tensor2& attended() const { return attended_; }

private:
    GnnStarTrunk trunk_;
    nn::MlpShape head_;
    std::vector<GnnStarTrunk::Cache> frame_caches_;
    std::vector<std::size_t> frame_nodes_;
    nn::AttentionCache attn_cache_;
    nn::MlpCache head_cache_;
    Tensor2 attended_;
    Tensor2 embedding_;
};

}  // namespace

std::unique_ptr<Model> make_model(const ModelConfig& config) {
    config.validate();
    switch (config.kind) {
        case ModelKind::gcn: return std::make_unique<GcnModel>(config);
        case ModelKind::gnnstar: return std::make_unique<GnnStarModel>(config);
        case ModelKind::mlp: return std::make_unique<MlpModel>(config);
        case ModelKind::dyn: return std::make_unique<DynModel>(config);
    }
    throw ValidationError("unknown model kind");
}

}  // namespace braingraph
