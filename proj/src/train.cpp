#include "braingraph/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>

#include "braingraph/connectivity.hpp"
#include "braingraph/error.hpp"
#include "braingraph/preprocess.hpp"
#include "json.hpp"

namespace braingraph {

namespace fs = std::filesystem;
using nlohmann::json;

TrainConfig TrainConfig::defaults_for(const TaskKind& task) {
    TrainConfig c;
    if (!task.is_classification()) {
        c.epochs = 50;
        c.lr = 1e-3;
        c.loss = nn::LossKind::mae;
    }
    return c;
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be a finite value >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw ValidationError("weight_decay must be a finite value >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
    if (num_layers < 1) throw ValidationError("num_layers must be >= 1");
    if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
    const double f[] = {fractions.train, fractions.val, fractions.test};
    for (double v : f)
        if (!(v >= 0.0)) throw ValidationError("split fractions must be non-negative");
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
}

namespace {

using Clock = std::chrono::steady_clock;

bool dynamic_model(ModelKind k) { return k == ModelKind::dyn; }

GraphSample sample_of(const GraphDataset& ds, std::size_t i) {
    GraphSample s;
    if (ds.kind == GraphKind::static_graph)
        s.graph = &ds.graphs[i];
    else
        s.sequence = &ds.sequences[i];
    return s;
}

double target_of(const GraphDataset& ds, std::size_t i) {
    const auto label = ds.label(i);
    if (!label) throw ValidationError("graph " + std::to_string(i) + " has no label");
    return label_as_double(*label);
}

std::size_t argmax(const nn::Tensor2& row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.cols(); ++c)
        if (row(0, c) > row(0, best)) best = c;
    return best;
}

nn::LossResult loss_for(const nn::Tensor2& out, const GraphDataset& ds, std::size_t i, const TargetScaling& scaling) {
    if (ds.task.is_classification()) return nn::cross_entropy(out, static_cast<std::int64_t>(target_of(ds, i)));
    return nn::mean_absolute_error(out, nn::Tensor2(1, 1, scaling.apply(target_of(ds, i))));
}

SplitScore score(Model& model, const GraphDataset& ds, const std::vector<std::size_t>& idx,
                 const TargetScaling& scaling) {
    SplitScore s;
    s.count = idx.size();
    if (idx.empty()) return s;
    double hits = 0.0, loss = 0.0, abs_err = 0.0;
    for (std::size_t i : idx) {
        const nn::Tensor2 out = model.forward(sample_of(ds, i), false, nullptr);
        loss += loss_for(out, ds, i, scaling).loss;
        if (ds.task.is_classification())
            hits += static_cast<double>(argmax(out)) == target_of(ds, i) ? 1.0 : 0.0;
        else
            abs_err += std::abs(out(0, 0) - scaling.apply(target_of(ds, i)));
    }
    const double n = static_cast<double>(idx.size());
    s.loss = loss / n;
    s.metric = ds.task.is_classification() ? hits / n : abs_err / n;
    return s;
}

// True when `a` is a strictly better validation result than `b`.
bool better(const SplitScore& a, const SplitScore& b, bool classification) {
    if (a.metric != b.metric) return classification ? a.metric > b.metric : a.metric < b.metric;
    return a.loss < b.loss;
}

std::size_t dataset_bytes(const GraphDataset& ds) {
    auto graph_bytes = [](const StaticGraph& g) {
        return g.features.size() * sizeof(double) + g.edges.size() * sizeof(Edge);
    };
    std::size_t total = 0;
    for (const auto& g : ds.graphs) total += graph_bytes(g);
    for (const auto& s : ds.sequences)
        for (const auto& f : s.frames) total += graph_bytes(f);
    return total;
}

json model_config_json(const ModelConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"input_dim", c.input_dim},
            {"num_nodes", c.num_nodes},
            {"outputs", c.outputs},
            {"num_layers", c.num_layers},
            {"hidden_dim", c.hidden_dim},
            {"readout", c.readout == Readout::mean ? "mean" : "sort_pool"},
            {"sort_k", c.resolved_sort_k()},
            {"mlp_hidden", c.mlp_hidden},
            {"baseline_hidden", c.baseline_hidden},
            {"dropout", c.dropout},
            {"residual", c.residual},
            {"positional_encoding", c.positional_encoding},
            {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.num_nodes = j.at("num_nodes").get<std::size_t>();
    c.outputs = j.at("outputs").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.readout = j.at("readout").get<std::string>() == "mean" ? Readout::mean : Readout::sort_pool;
    c.sort_k = j.at("sort_k").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
    c.baseline_hidden = j.at("baseline_hidden").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.residual = j.at("residual").get<bool>();
    c.positional_encoding = j.at("positional_encoding").get<bool>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

json score_json(const SplitScore& s) { return {{"metric", s.metric}, {"loss", s.loss}, {"count", s.count}}; }

}  // namespace

ModelConfig model_config_for(const TrainConfig& config, const GraphDataset& ds) {
    if (ds.size() == 0) throw ValidationError("dataset is empty");
    const bool seq = ds.kind == GraphKind::dynamic_sequence;
    if (seq != dynamic_model(config.model))
        throw ValidationError("model '" + to_string(config.model) + "' does not accept " +
                              (seq ? "dynamic graph sequences" : "static graphs"));
    const StaticGraph& first = seq ? ds.sequences.front().frames.at(0) : ds.graphs.front();
    ModelConfig m;
    m.kind = config.model;
    m.input_dim = first.features.cols();
    m.num_nodes = first.n;
    m.outputs = ds.task.is_classification() ? ds.task.num_classes : 1;
    m.num_layers = config.num_layers;
    m.hidden_dim = config.hidden_dim;
    m.readout = config.readout;
    m.sort_k = config.sort_k;
    m.mlp_hidden = config.mlp_hidden;
    m.dropout = config.dropout;
    m.init_seed = config.seed;
    return m;
}

TrainResult train(const TrainConfig& config, const GraphDataset& ds, const SplitSpec& split) {
    config.validate();
    const auto t0 = Clock::now();
    if (ds.task.is_classification() != (config.loss == nn::LossKind::cross_entropy))
        throw ValidationError("loss '" + nn::to_string(config.loss) + "' does not fit the dataset task");
    for (const auto* part : {&split.train, &split.val, &split.test})
        for (std::size_t i : *part)
            if (i >= ds.size()) throw BoundsError("split index " + std::to_string(i) + " out of range");
    if (split.train.empty()) throw ValidationError("training split is empty");

    TrainResult r;
    r.task = ds.task;
    r.split = split;
    r.model = model_config_for(config, ds);
    if (!ds.task.is_classification() && config.normalize_targets) {
        double lo = target_of(ds, split.train.front()), hi = lo;
        for (std::size_t i : split.train) {
            lo = std::min(lo, target_of(ds, i));
            hi = std::max(hi, target_of(ds, i));
        }
        if (hi > lo) r.scaling = {true, lo, hi};
    }

    auto model = make_model(r.model);
    nn::ParamStore& params = model->params();
    nn::ParamStore grads = params.zeros_like();
    nn::AdamState adam = nn::AdamState::for_params(params);
    Rng rng(derive_seed(config.seed, "train"));
    const bool cls = ds.task.is_classification();

    Metrics& m = r.metrics;
    m.classification = cls;
    m.loss_curve.push_back(score(*model, ds, split.train, r.scaling).loss);
    SplitScore best_val = score(*model, ds, split.val, r.scaling);
    m.val_curve.push_back(best_val.metric);
    r.params = params;

    std::vector<std::size_t> order = split.train;
    const std::size_t batch = config.batch_size ? std::min(config.batch_size, order.size()) : order.size();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.batch_size) rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += batch) {
            const std::size_t end = std::min(order.size(), begin + batch);
            const double inv = 1.0 / static_cast<double>(end - begin);
            grads.set_zero();
            for (std::size_t p = begin; p < end; ++p) {
                const std::size_t i = order[p];
                const nn::Tensor2 out = model->forward(sample_of(ds, i), true, &rng);
                nn::LossResult lr = loss_for(out, ds, i, r.scaling);
                if (!std::isfinite(lr.loss))
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " on graph " +
                                         std::to_string(i) + " (" + ds.subject_id(i) + ")");
                lr.grad *= inv;
                model->backward(lr.grad, grads);
            }
            nn::adam_step(params, grads, adam, config.lr, config.weight_decay);
        }
        m.loss_curve.push_back(score(*model, ds, split.train, r.scaling).loss);
        if (!std::isfinite(m.loss_curve.back()))
            throw NumericalError("non-finite training loss after epoch " + std::to_string(epoch));
        const SplitScore val = score(*model, ds, split.val, r.scaling);
        m.val_curve.push_back(val.metric);
        if (better(val, best_val, cls)) {
            best_val = val;
            m.best_epoch = epoch;
            r.params = params;
        }
    }

    params = r.params;
    m.train = score(*model, ds, split.train, r.scaling);
    m.val = score(*model, ds, split.val, r.scaling);
    m.test = score(*model, ds, split.test, r.scaling);
    // params, gradients, two Adam moments and the retained best copy
    m.peak_memory_bytes = 5 * params.scalar_count() * sizeof(double) + dataset_bytes(ds);
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

TrainResult train(const TrainConfig& config, const GraphDataset& ds) {
    config.validate();
    return train(config, ds, stratified_split(ds, config.fractions, config.seed));
}

TrainResult train(const TrainConfig& config) {
    if (config.dataset_path.empty()) throw ValidationError("train config has no dataset path");
    return train(config, load_dataset(config.dataset_path));
}

void save_checkpoint(const TrainResult& result, const TrainConfig& config, const fs::path& dir) {
    const json extra{{"model", model_config_json(result.model)},
                     {"task", result.task.is_classification() ? "classification" : "regression"},
                     {"num_classes", result.task.num_classes},
                     {"scaling", {{"enabled", result.scaling.enabled}, {"lo", result.scaling.lo}, {"hi", result.scaling.hi}}},
                     {"best_epoch", result.metrics.best_epoch}};
    nn::save_params(result.params, dir, extra.dump());

    json deviations = json::array();
    if (result.model.kind == ModelKind::gcn)
        deviations.push_back("flatten + MLP head after sort pooling in place of two 1-D convolutions");
    if (result.model.kind == ModelKind::gnnstar || result.model.kind == ModelKind::dyn) {
        deviations.push_back("concatenation covers H1..HL, not the raw input");
        deviations.push_back("residual projection learned only where the width changes");
        deviations.push_back("no batch normalisation");
    }
    if (result.model.kind == ModelKind::dyn) {
        deviations.push_back("sinusoidal positional encoding");
        deviations.push_back("frame embeddings use a mean readout");
    }
    const json card{{"model", model_config_json(result.model)},
                    {"deviations", deviations},
                    {"seeds", {{"train", config.seed}, {"init", result.model.init_seed}, {"split", result.split.seed}}},
                    {"training",
                     {{"epochs", config.epochs},
                      {"lr", config.lr},
                      {"weight_decay", config.weight_decay},
                      {"dropout", config.dropout},
                      {"batch_size", config.batch_size},
                      {"loss", nn::to_string(config.loss)}}},
                    {"metrics", json::parse(metrics_to_json(result.metrics))}};
    std::ofstream out(dir / "model_card.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "model_card.json").string());
    out << card.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
    Checkpoint c;
    c.params = nn::load_params(dir);
    std::ifstream in(dir / "params.json");
    json extra;
    try {
        extra = json::parse(in).at("extra");
        c.model = model_config_from_json(extra.at("model"));
        c.task = extra.at("task").get<std::string>() == "classification"
                     ? TaskKind::classification(extra.at("num_classes").get<std::size_t>())
                     : TaskKind::regression();
        const json& s = extra.at("scaling");
        c.scaling = {s.at("enabled").get<bool>(), s.at("lo").get<double>(), s.at("hi").get<double>()};
    } catch (const json::exception& e) {
        throw LoadError((dir / "params.json").string() + ": missing model metadata (" + e.what() + ")");
    }
    return c;
}

std::unique_ptr<Model> restore_model(const Checkpoint& ckpt) {
    auto model = make_model(ckpt.model);
    nn::ParamStore& p = model->params();
    for (std::size_t t = 0; t < p.size(); ++t) {
        const std::string& name = p.name(t);
        if (!ckpt.params.contains(name)) throw ValidationError("checkpoint lacks tensor '" + name + "'");
        const nn::Tensor2& v = ckpt.params.at(name);
        if (!v.same_shape(p.value(t)))
            throw ValidationError("checkpoint tensor '" + name + "' is " + v.shape_string() + ", model expects " +
                                  p.value(t).shape_string());
    }
    for (std::size_t t = 0; t < ckpt.params.size(); ++t)
        if (!p.contains(ckpt.params.name(t)))
            throw ValidationError("checkpoint tensor '" + ckpt.params.name(t) + "' is not part of the model");
    for (std::size_t t = 0; t < p.size(); ++t) p.value(t) = ckpt.params.at(p.name(t));
    p.init_seed = ckpt.params.init_seed;
    return model;
}

SplitScore evaluate(const Checkpoint& ckpt, const GraphDataset& ds, const std::vector<std::size_t>& indices) {
    if (ds.task.is_classification() != ckpt.task.is_classification())
        throw ValidationError("checkpoint task does not match the dataset task");
    for (std::size_t i : indices)
        if (i >= ds.size()) throw BoundsError("split index " + std::to_string(i) + " out of range");
    auto model = restore_model(ckpt);
    return score(*model, ds, indices, ckpt.scaling);
}

Metrics evaluate(const Checkpoint& ckpt, const GraphDataset& ds, const SplitSpec& split) {
    const auto t0 = Clock::now();
    Metrics m;
    m.classification = ckpt.task.is_classification();
    m.train = evaluate(ckpt, ds, split.train);
    m.val = evaluate(ckpt, ds, split.val);
    m.test = evaluate(ckpt, ds, split.test);
    m.peak_memory_bytes = ckpt.params.scalar_count() * sizeof(double) + dataset_bytes(ds);
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return m;
}

std::string metrics_to_json(const Metrics& m) {
    const json j{{"metric", m.metric_name()},
                 {"train", score_json(m.train)},
                 {"val", score_json(m.val)},
                 {"test", score_json(m.test)},
                 {"loss_curve", m.loss_curve},
                 {"val_curve", m.val_curve},
                 {"best_epoch", m.best_epoch},
                 {"wall_seconds", m.wall_seconds},
                 {"peak_memory_bytes", m.peak_memory_bytes}};
    return j.dump(2);
}

// ------------------------------------------------------------------ probe

double ProbeReport::mean_test_metric(FeatureKind feature) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.feature == feature) {
            sum += r.test_metric;
            ++n;
        }
    if (n == 0) throw ValidationError("probe report has no " + to_string(feature) + " rows");
    return sum / static_cast<double>(n);
}

ProbeReport run_probe(const ProbeGrid& grid, const TrainConfig& base, const CorpusProvider& corpus) {
    if (grid.cells() == 0) throw ValidationError("probe grid is empty");
    base.validate();
    std::map<std::size_t, std::vector<CleanTimeSeries>> series;
    std::map<std::size_t, std::vector<ConnectivityMatrix>> conn;
    for (std::size_t rois : grid.rois) {
        if (series.count(rois)) continue;
        auto& ts = series[rois] = corpus(rois);
        if (ts.empty()) throw ValidationError("probe corpus for " + std::to_string(rois) + " ROIs is empty");
        auto& cm = conn[rois];
        for (const auto& s : ts) {
            if (s.rois() != rois)
                throw DimensionError("probe corpus subject " + s.subject_id + " has " + std::to_string(s.rois()) +
                                     " ROIs, expected " + std::to_string(rois));
            cm.push_back(pearson_full(s));
        }
    }

    struct Cell {
        FeatureKind feature;
        std::size_t rois;
        double density;
    };
    std::vector<Cell> cells;
    for (FeatureKind f : grid.features)
        for (std::size_t r : grid.rois)
            for (double d : grid.densities) cells.push_back({f, r, d});

    ProbeReport report;
    report.rows.resize(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    const auto count = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < count; ++c) {
        try {
            const Cell& cell = cells[static_cast<std::size_t>(c)];
            const auto& ts = series.at(cell.rois);
            const auto& cm = conn.at(cell.rois);
            GraphDataset ds;
            ds.name = "probe";
            ds.kind = GraphKind::static_graph;
            bool classification = true;
            std::size_t classes = 0;
            for (std::size_t s = 0; s < ts.size(); ++s) {
                ds.graphs.push_back(build_static(ts[s], cm[s], cell.feature, cell.density));
                if (!ts[s].label) throw ValidationError("probe subject " + ts[s].subject_id + " has no label");
                if (is_class_label(*ts[s].label))
                    classes = std::max<std::size_t>(classes, std::get<std::int64_t>(*ts[s].label) + 1);
                else
                    classification = false;
            }
            ds.task = classification ? TaskKind::classification(classes) : TaskKind::regression();
            ds.provenance.feature = cell.feature;
            ds.provenance.threshold_percent = cell.density;
            ds.provenance.rois = cell.rois;
            const TrainResult r = train(base, ds);
            ProbeRow& row = report.rows[static_cast<std::size_t>(c)];
            row.feature = cell.feature;
            row.rois = cell.rois;
            row.density = cell.density;
            row.feature_dim = ds.graphs.front().features.cols();
            row.train_metric = r.metrics.train.metric;
            row.val_metric = r.metrics.val.metric;
            row.test_metric = r.metrics.test.metric;
            row.best_epoch = r.metrics.best_epoch;
        } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    report.classification = base.loss == nn::LossKind::cross_entropy;
    return report;
}

ProbeReport run_probe(const ProbeGrid& grid, const TrainConfig& base, const SyntheticSpec& spec) {
    return run_probe(grid, base, [&spec](std::size_t rois) {
        SyntheticSpec s = spec;
        s.n_rois = rois;
        std::vector<CleanTimeSeries> out;
        for (const auto& ts : generate_synthetic(s)) out.push_back(preprocess(ts, nullptr));
        return out;
    });
}

std::string probe_to_json(const ProbeReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"feature", to_string(r.feature)},
                        {"rois", r.rois},
                        {"density", r.density},
                        {"feature_dim", r.feature_dim},
                        {"train", r.train_metric},
                        {"val", r.val_metric},
                        {"test", r.test_metric},
                        {"best_epoch", r.best_epoch}});
    json means = json::object();
    for (const auto& r : report.rows)
        if (!means.contains(to_string(r.feature))) means[to_string(r.feature)] = report.mean_test_metric(r.feature);
    const json j{{"metric", report.classification ? "accuracy" : "mae"}, {"rows", rows}, {"mean_test_by_feature", means}};
    return j.dump(2);
}

std::string probe_to_table(const ProbeReport& report) {
    std::ostringstream out;
    char line[160];
    const char* metric = report.classification ? "acc" : "mae";
    std::snprintf(line, sizeof line, "%-10s %5s %8s %8s %10s %10s %10s %6s\n", "feature", "rois", "density", "dim",
                  (std::string("train_") + metric).c_str(), (std::string("val_") + metric).c_str(),
                  (std::string("test_") + metric).c_str(), "epoch");
    out << line;
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof line, "%-10s %5zu %7g%% %8zu %10.4f %10.4f %10.4f %6zu\n", to_string(r.feature).c_str(),
                      r.rois, r.density, r.feature_dim, r.train_metric, r.val_metric, r.test_metric, r.best_epoch);
        out << line;
    }
    return out.str();
}

void save_probe_report(const ProbeReport& report, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream js(dir / "report.json", std::ios::trunc);
    std::ofstream txt(dir / "report.txt", std::ios::trunc);
    if (!js || !txt) throw IoError("cannot write probe report under " + dir.string());
    js << probe_to_json(report) << '\n';
    txt << probe_to_table(report);
}

}  // namespace braingraph
