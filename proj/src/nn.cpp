#include "braingraph/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"
#include "json.hpp"

namespace braingraph::nn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- params

Tensor2& ParamStore::add(const std::string& name, Tensor2 value) {
    if (index_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(value));
    return items_.back().second;
}

Tensor2& ParamStore::at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

const Tensor2& ParamStore::at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return items_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

ParamStore ParamStore::zeros_like() const {
    ParamStore z;
    z.init_seed = init_seed;
    for (const auto& [name, t] : items_) z.add(name, Tensor2(t.rows(), t.cols()));
    return z;
}

void ParamStore::set_zero() {
    for (auto& item : items_) item.second.fill(0.0);
}

bool ParamStore::all_finite() const {
    for (const auto& item : items_)
        if (!item.second.all_finite()) return false;
    return true;
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (std::size_t i = 0; i < items_.size(); ++i)
        if (items_[i].first != other.items_[i].first || !items_[i].second.same_shape(other.items_[i].second))
            return false;
    return true;
}

Tensor2 glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor2 w(fan_in, fan_out);
    for (double& v : w.values()) v = rng.uniform(-a, a);
    return w;
}

// ------------------------------------------------------------- adjacency

NormalizedAdjacency NormalizedAdjacency::from_edges(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::uint32_t>> nb(n);
    for (std::size_t v = 0; v < n; ++v) nb[v].push_back(static_cast<std::uint32_t>(v));
    for (const Edge& e : edges) {
        if (e.j >= n || e.i == e.j) throw DimensionError("edge outside graph or self loop");
        nb[e.i].push_back(e.j);
        nb[e.j].push_back(e.i);
    }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::sort(nb[v].begin(), nb[v].end());
        inv_sqrt_deg[v] = 1.0 / std::sqrt(static_cast<double>(nb[v].size()));
    }
    NormalizedAdjacency a;
    a.n_ = n;
    a.row_ptr_.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
        a.row_ptr_[v + 1] = a.row_ptr_[v] + nb[v].size();
        for (std::uint32_t u : nb[v]) {
            a.cols_.push_back(u);
            a.vals_.push_back(inv_sqrt_deg[v] * inv_sqrt_deg[u]);
        }
    }
    return a;
}

Tensor2 NormalizedAdjacency::multiply(const Tensor2& x) const {
    if (x.rows() != n_) throw DimensionError("adjacency is " + std::to_string(n_) + " nodes, features " + x.shape_string());
    Tensor2 out(n_, x.cols());
    const std::size_t d = x.cols();
    for (std::size_t v = 0; v < n_; ++v) {
        double* o = out.data() + v * d;
        for (std::size_t p = row_ptr_[v]; p < row_ptr_[v + 1]; ++p) {
            const double w = vals_[p];
            const double* xr = x.data() + static_cast<std::size_t>(cols_[p]) * d;
            for (std::size_t c = 0; c < d; ++c) o[c] += w * xr[c];
        }
    }
    return out;
}

Tensor2 NormalizedAdjacency::dense() const {
    Tensor2 a(n_, n_);
    for (std::size_t v = 0; v < n_; ++v)
        for (std::size_t p = row_ptr_[v]; p < row_ptr_[v + 1]; ++p) a(v, cols_[p]) = vals_[p];
    return a;
}

// ------------------------------------------------------------ elementwise

Tensor2 relu(const Tensor2& x) {
    Tensor2 y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor2 relu_backward(const Tensor2& pre, const Tensor2& dy) {
    Tensor2 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(pre.data()[i] > 0.0)) dx.data()[i] = 0.0;
    return dx;
}

Tensor2 affine(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
    if (b.rows() != 1 || b.cols() != w.cols()) throw DimensionError("bias shape " + b.shape_string());
    Tensor2 y = kernels::matmul(x, w);
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
    return y;
}

void accumulate_bias_grad(const Tensor2& dy, Tensor2& db) {
    for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) db(0, c) += dy(r, c);
}

// -------------------------------------------------------------------- GCN

Tensor2 gcn_forward(const NormalizedAdjacency& adj, const Tensor2& x, const Tensor2& w, GcnCache* cache) {
    if (x.cols() != w.rows()) throw DimensionError("gcn: features " + x.shape_string() + " vs weight " + w.shape_string());
    Tensor2 ax = adj.multiply(x);
    Tensor2 pre = kernels::matmul(ax, w);
    Tensor2 out = relu(pre);
    if (cache) {
        cache->ax = std::move(ax);
        cache->pre = std::move(pre);
    }
    return out;
}

GcnGrads gcn_backward(const NormalizedAdjacency& adj, const Tensor2& w, const GcnCache& cache, const Tensor2& dout) {
    const Tensor2 dpre = relu_backward(cache.pre, dout);
    GcnGrads g;
    g.dw = kernels::matmul_tn(cache.ax, dpre);
    g.dx = adj.multiply(kernels::matmul_nt(dpre, w));
    return g;
}

// -------------------------------------------------------------------- MLP

void init_mlp(ParamStore& params, const MlpShape& shape, Rng& rng) {
    if (shape.dims.size() < 2) throw ValidationError("MLP needs at least input and output dims");
    for (std::size_t l = 0; l < shape.layers(); ++l) {
        params.add(shape.prefix + ".w" + std::to_string(l), glorot_uniform(shape.dims[l], shape.dims[l + 1], rng));
        params.add(shape.prefix + ".b" + std::to_string(l), Tensor2(1, shape.dims[l + 1]));
    }
}

Tensor2 mlp_forward(const Tensor2& x, const ParamStore& params, const MlpShape& shape, double dropout_rate, bool train,
                    Rng* rng, MlpCache* cache) {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ValidationError("dropout rate must lie in [0, 1), got " + std::to_string(dropout_rate));
    if (x.cols() != shape.dims.front())
        throw DimensionError(shape.prefix + ": input " + x.shape_string() + ", expected width " +
                             std::to_string(shape.dims.front()));
    const bool dropout = train && dropout_rate > 0.0;
    if (dropout && !rng) throw ValidationError("dropout in training mode needs a generator");
    if (cache) *cache = MlpCache{};
    Tensor2 h = x;
    for (std::size_t l = 0; l < shape.layers(); ++l) {
        const std::string idx = std::to_string(l);
        Tensor2 z = affine(h, params.at(shape.prefix + ".w" + idx), params.at(shape.prefix + ".b" + idx));
        if (cache) cache->inputs.push_back(std::move(h));
        if (l + 1 == shape.layers()) return z;
        Tensor2 a = relu(z);
        Tensor2 mask;
        if (dropout) {
            mask = Tensor2(a.rows(), a.cols());
            const double keep_scale = 1.0 / (1.0 - dropout_rate);
            for (std::size_t i = 0; i < a.size(); ++i) {
                mask.data()[i] = rng->uniform01() < dropout_rate ? 0.0 : keep_scale;
                a.data()[i] *= mask.data()[i];
            }
        }
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->masks.push_back(std::move(mask));
        }
        h = std::move(a);
    }
    return h;
}

Tensor2 mlp_backward(const ParamStore& params, const MlpShape& shape, const MlpCache& cache, const Tensor2& dout,
                     ParamStore& grads) {
    Tensor2 d = dout;
    for (std::size_t l = shape.layers(); l-- > 0;) {
        const std::string idx = std::to_string(l);
        const Tensor2& w = params.at(shape.prefix + ".w" + idx);
        grads.at(shape.prefix + ".w" + idx) += kernels::matmul_tn(cache.inputs[l], d);
        accumulate_bias_grad(d, grads.at(shape.prefix + ".b" + idx));
        d = kernels::matmul_nt(d, w);
        if (l > 0) {
            if (!cache.masks[l - 1].empty()) d = hadamard(d, cache.masks[l - 1]);
            d = relu_backward(cache.pre[l - 1], d);
        }
    }
    return d;
}

// ------------------------------------------------------------- sort pool

Tensor2 sort_pool(const Tensor2& h, std::size_t k, SortPoolCache* cache) {
    if (k < 1) throw ValidationError("sort pooling needs k >= 1");
    const std::size_t n = h.rows();
    const std::size_t d = h.cols();
    if (d == 0) throw DimensionError("sort pooling over zero channels");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h(a, d - 1) > h(b, d - 1); });
    order.resize(std::min(k, n));
    Tensor2 out(1, k * d);
    for (std::size_t slot = 0; slot < order.size(); ++slot)
        std::copy(h.row(order[slot]).begin(), h.row(order[slot]).end(), out.data() + slot * d);
    if (cache) *cache = SortPoolCache{std::move(order), n, d, k};
    return out;
}

Tensor2 sort_pool_backward(const SortPoolCache& cache, const Tensor2& dout) {
    Tensor2 dh(cache.n, cache.d);
    for (std::size_t slot = 0; slot < cache.order.size(); ++slot)
        for (std::size_t c = 0; c < cache.d; ++c) dh(cache.order[slot], c) += dout(0, slot * cache.d + c);
    return dh;
}

Tensor2 mean_rows(const Tensor2& h) {
    Tensor2 out(1, h.cols());
    for (std::size_t r = 0; r < h.rows(); ++r)
        for (std::size_t c = 0; c < h.cols(); ++c) out(0, c) += h(r, c);
    out *= 1.0 / static_cast<double>(h.rows());
    return out;
}

Tensor2 mean_rows_backward(std::size_t n, const Tensor2& dout) {
    Tensor2 dh(n, dout.cols());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < dout.cols(); ++c) dh(r, c) = dout(0, c) * inv;
    return dh;
}

// ------------------------------------------------------------- attention

Tensor2 sinusoidal_encoding(std::size_t length, std::size_t dim) {
    Tensor2 pe(length, dim);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double pair = static_cast<double>(i / 2 * 2);
            const double angle = static_cast<double>(t) / std::pow(10000.0, pair / static_cast<double>(dim));
            pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Tensor2 softmax_rows(const Tensor2& x) {
    Tensor2 y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = -INFINITY;
        for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) = std::exp(x(r, c) - mx);
            s += y(r, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= s;
    }
    return y;
}

Tensor2 attention_forward(const Tensor2& s, const Tensor2& wq, const Tensor2& wk, const Tensor2& wv,
                          bool positional_encoding, AttentionCache* cache) {
    if (wq.rows() != s.cols() || wk.rows() != s.cols() || wv.rows() != s.cols() || wq.cols() != wk.cols())
        throw DimensionError("attention: input " + s.shape_string() + ", Wq " + wq.shape_string() + ", Wk " +
                             wk.shape_string() + ", Wv " + wv.shape_string());
    Tensor2 in = s;
    if (positional_encoding) in += sinusoidal_encoding(s.rows(), s.cols());
    Tensor2 q = kernels::matmul(in, wq);
    Tensor2 k = kernels::matmul(in, wk);
    Tensor2 v = kernels::matmul(in, wv);
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
    Tensor2 a = softmax_rows(kernels::matmul_nt(q, k) * scale);
    Tensor2 out = kernels::matmul(a, v);
    if (cache) *cache = AttentionCache{std::move(in), std::move(q), std::move(k), std::move(v), std::move(a), scale};
    return out;
}

AttentionGrads attention_backward(const Tensor2& wq, const Tensor2& wk, const Tensor2& wv, const AttentionCache& c,
                                  const Tensor2& dout) {
    const Tensor2 da = kernels::matmul_nt(dout, c.v);
    const Tensor2 dv = kernels::matmul_tn(c.weights, dout);
    Tensor2 dscores(da.rows(), da.cols());
    for (std::size_t r = 0; r < da.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < da.cols(); ++j) dot += da(r, j) * c.weights(r, j);
        for (std::size_t j = 0; j < da.cols(); ++j) dscores(r, j) = c.weights(r, j) * (da(r, j) - dot) * c.scale;
    }
    const Tensor2 dq = kernels::matmul(dscores, c.k);
    const Tensor2 dk = kernels::matmul_tn(dscores, c.q);
    AttentionGrads g;
    g.dwq = kernels::matmul_tn(c.input, dq);
    g.dwk = kernels::matmul_tn(c.input, dk);
    g.dwv = kernels::matmul_tn(c.input, dv);
    g.ds = kernels::matmul_nt(dq, wq);
    g.ds += kernels::matmul_nt(dk, wk);
    g.ds += kernels::matmul_nt(dv, wv);
    return g;
}

// ----------------------------------------------------------------- losses

LossKind parse_loss_kind(const std::string& name) {
    if (name == "cross_entropy" || name == "ce") return LossKind::cross_entropy;
    if (name == "mae" || name == "l1") return LossKind::mae;
    throw ValidationError("unknown loss '" + name + "'");
}

std::string to_string(LossKind kind) { return kind == LossKind::cross_entropy ? "cross_entropy" : "mae"; }

LossResult cross_entropy(const Tensor2& logits, std::int64_t target) {
    if (logits.rows() != 1) throw DimensionError("cross entropy expects a single row of logits");
    if (target < 0 || static_cast<std::size_t>(target) >= logits.cols())
        throw ValidationError("class index " + std::to_string(target) + " outside [0, " + std::to_string(logits.cols()) +
                              ")");
    double mx = -INFINITY;
    for (double v : logits.values()) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : logits.values()) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    LossResult r;
    r.loss = lse - logits(0, static_cast<std::size_t>(target));
    r.grad = Tensor2(1, logits.cols());
    for (std::size_t c = 0; c < logits.cols(); ++c) r.grad(0, c) = std::exp(logits(0, c) - lse);
    r.grad(0, static_cast<std::size_t>(target)) -= 1.0;
    return r;
}

LossResult mean_absolute_error(const Tensor2& pred, const Tensor2& target) {
    if (!pred.same_shape(target)) throw DimensionError("MAE shapes differ: " + pred.shape_string() + " vs " + target.shape_string());
    LossResult r;
    r.grad = Tensor2(pred.rows(), pred.cols());
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred.data()[i] - target.data()[i];
        r.loss += std::abs(diff) * inv;
        r.grad.data()[i] = diff > 0.0 ? inv : (diff < 0.0 ? -inv : 0.0);
    }
    return r;
}

// ------------------------------------------------------------------- Adam

AdamState AdamState::for_params(const ParamStore& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr, double weight_decay) {
    if (!params.same_layout(grads) || !params.same_layout(state.m))
        throw DimensionError("adam: parameter, gradient and state layouts differ");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        double* p = params.value(t).data();
        const double* g = grads.value(t).data();
        double* m = state.m.value(t).data();
        double* v = state.v.value(t).data();
        for (std::size_t i = 0; i < params.value(t).size(); ++i) {
            p[i] -= lr * weight_decay * p[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// ------------------------------------------------------------- grad check

GradCheckReport grad_check(const LossClosure& closure, ParamStore params, const GradCheckOptions& options) {
    ParamStore analytic = params.zeros_like();
    const double base = closure(params, &analytic);
    if (!std::isfinite(base)) throw NumericalError("gradient check: non-finite loss at the base point");
    GradCheckReport report;
    report.step = options.step;
    report.tolerance = options.tolerance;
    Rng rng(options.seed);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor2& p = params.value(t);
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > options.coords_per_param) {
            rng.shuffle(coords);
            coords.resize(options.coords_per_param);
        }
        ParamCheck pc{params.name(t), 0.0, coords.size()};
        for (std::size_t idx : coords) {
            const double orig = p.data()[idx];
            p.data()[idx] = orig + options.step;
            const double up = closure(params, nullptr);
            p.data()[idx] = orig - options.step;
            const double down = closure(params, nullptr);
            p.data()[idx] = orig;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericalError("gradient check: non-finite loss perturbing " + params.name(t));
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic.value(t).data()[idx];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            pc.max_rel_error = std::max(pc.max_rel_error, rel);
        }
        report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
        report.params.push_back(std::move(pc));
    }
    report.pass = report.max_rel_error < options.tolerance;
    return report;
}

// ------------------------------------------------------------ checkpoints

namespace {
constexpr char kParamMagic[4] = {'N', 'G', 'P', 'W'};
constexpr std::uint32_t kParamVersion = 1;
}  // namespace

void save_params(const ParamStore& params, const fs::path& dir, const std::string& extra_json) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        tensors.push_back({{"name", params.name(t)},
                           {"rows", params.value(t).rows()},
                           {"cols", params.value(t).cols()},
                           {"offset", offset}});
        offset += params.value(t).size();
    }
    const nlohmann::json manifest{{"format", "braingraph-params"},
                                  {"version", kParamVersion},
                                  {"init_seed", params.init_seed},
                                  {"scalars", offset},
                                  {"tensors", tensors},
                                  {"extra", nlohmann::json::parse(extra_json)}};
    {
        std::ofstream out(dir / "params.json", std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "params.json").string());
        out << manifest.dump(2) << '\n';
    }
    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write " + (dir / "params.bin").string());
    bin.write(kParamMagic, 4);
    bin.write(reinterpret_cast<const char*>(&kParamVersion), 4);
    bin.write(reinterpret_cast<const char*>(&offset), 8);
    for (std::size_t t = 0; t < params.size(); ++t)
        bin.write(reinterpret_cast<const char*>(params.value(t).data()),
                  static_cast<std::streamsize>(params.value(t).size() * sizeof(double)));
    if (!bin) throw IoError("write failed for " + (dir / "params.bin").string());
}

ParamStore load_params(const fs::path& dir) {
    const fs::path json_path = dir / "params.json";
    const fs::path bin_path = dir / "params.bin";
    if (!fs::exists(json_path) || !fs::exists(bin_path)) throw IoError("no checkpoint at " + dir.string());
    std::ifstream js(json_path);
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(json_path.string() + ": " + e.what());
    }
    if (m.value("version", 0u) != kParamVersion) throw VersionError(json_path.string() + ": unsupported checkpoint version");
    std::ifstream in(bin_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    const std::uint64_t scalars = m.at("scalars").get<std::uint64_t>();
    if (bytes.size() != 16 + scalars * 8 || std::memcmp(bytes.data(), kParamMagic, 4) != 0)
        throw LoadError(bin_path.string() + ": size or magic does not match the manifest");
    ParamStore p;
    p.init_seed = m.value("init_seed", std::uint64_t{0});
    for (const auto& t : m.at("tensors")) {
        Tensor2 v(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
        const std::uint64_t off = t.at("offset").get<std::uint64_t>();
        if (off + v.size() > scalars) throw LoadError(bin_path.string() + ": tensor extends past blob end");
        std::memcpy(v.data(), bytes.data() + 16 + off * 8, v.size() * 8);
        p.add(t.at("name").get<std::string>(), std::move(v));
    }
    return p;
}

}  // namespace braingraph::nn
