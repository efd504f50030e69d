#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "braingraph/dataset.hpp"
#include "braingraph/error.hpp"
#include "braingraph/io.hpp"
#include "braingraph/preprocess.hpp"
#include "braingraph/random.hpp"
#include "braingraph/stats.hpp"
#include "braingraph/train.hpp"
#include "braingraph/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace braingraph;

namespace {

const char* kPrecedence =
    "Settings resolve as: command-line flags, then the --config JSON file, then built-in defaults.\n"
    "Exit codes: 0 success, 1 invalid input or configuration, 2 file system or load failure.";

json default_config() {
    return {
        {"seed", 123},
        {"rois", 100},
        {"synth",
         {{"subjects", 40},
          {"timepoints", 300},
          {"classes", 2},
          {"block_size", 5},
          {"within_block_corr", 0.8},
          {"noise_sd", 1.0},
          {"seed", 7},
          {"format", "csv"}}},
        {"preprocess", {{"nuisance_dir", ""}, {"derivatives", true}}},
        {"static", {{"density", 5.0}, {"features", "corr"}}},
        {"dynamic", {{"density", 10.0}, {"features", "corr"}, {"gamma", 50}, {"stride", 3}, {"crop_len", 150}}},
        {"split", {{"train", 0.7}, {"val", 0.1}, {"test", 0.2}}},
        {"train",
         {{"model", "gnnstar"},
          {"epochs", nullptr},
          {"lr", nullptr},
          {"weight_decay", 5e-4},
          {"dropout", 0.5},
          {"num_layers", 3},
          {"hidden_dim", 64},
          {"readout", "sort_pool"},
          {"sort_k", 0},
          {"mlp_hidden", {64}},
          {"batch_size", 0},
          {"normalize_targets", true}}},
        {"probe",
         {{"features", {"corr", "bold", "corr_bold"}},
          {"rois", {20, 50}},
          {"densities", {5.0, 10.0, 20.0}},
          {"subjects", 200},
          {"timepoints", 176}}},
    };
}

void check_keys(const json& defaults, const json& given, const std::string& where) {
    if (!given.is_object()) throw ValidationError("config " + (where.empty() ? "root" : where) + " must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!defaults.contains(key)) throw ValidationError("unknown config key '" + path + "'");
        if (defaults[key].is_object()) check_keys(defaults[key], value, path);
    }
}

struct Flags {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t rois = 0;
    double density = 0;
    std::string features;
    std::size_t gamma = 0, stride = 0, crop_len = 0;
    std::string model;
    std::string out = "run";
    std::string input;
    std::string checkpoint;
    std::size_t epochs = 0;
    double lr = 0;

    std::map<std::string, CLI::Option*> given;
    bool has(const std::string& name) const {
        auto it = given.find(name);
        return it != given.end() && it->second->count() > 0;
    }
};

json resolve_config(const Flags& f, const std::string& command) {
    json cfg = default_config();
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw IoError("cannot open config file " + f.config);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("config file " + f.config + ": " + e.what());
        }
        check_keys(cfg, file, "");
        cfg.merge_patch(file);
    }
    if (f.has("seed")) cfg["seed"] = f.seed;
    if (f.has("rois")) cfg["rois"] = f.rois;
    const std::string section = command == "build-dynamic" ? "dynamic" : "static";
    if (f.has("density")) cfg[section]["density"] = f.density;
    if (f.has("features")) cfg[section]["features"] = f.features;
    if (f.has("gamma")) cfg["dynamic"]["gamma"] = f.gamma;
    if (f.has("stride")) cfg["dynamic"]["stride"] = f.stride;
    if (f.has("crop-len")) cfg["dynamic"]["crop_len"] = f.crop_len;
    if (f.has("model")) cfg["train"]["model"] = f.model;
    if (f.has("epochs")) cfg["train"]["epochs"] = f.epochs;
    if (f.has("lr")) cfg["train"]["lr"] = f.lr;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

fs::path require_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw IoError(std::string(what) + " not found: " + dir.string());
    return dir;
}

std::vector<fs::path> series_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(require_dir(dir, "input directory"))) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".csv" || ext == ".bin")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .csv or .bin time series in " + dir.string());
    return files;
}

std::vector<CleanTimeSeries> load_clean(const fs::path& dir) {
    std::vector<CleanTimeSeries> out;
    for (const auto& p : series_files(dir)) out.push_back(normalize(load_timeseries(p, series_format_for(p))));
    return out;
}

void check_rois(const Flags& f, const json& cfg, std::size_t actual) {
    if (f.has("rois") && cfg["rois"].get<std::size_t>() != actual)
        throw ValidationError("--rois " + std::to_string(cfg["rois"].get<std::size_t>()) + " does not match the " +
                              std::to_string(actual) + " ROIs in the input");
}

double parse_density_value(const json& v) {
    const double d = v.get<double>();
    if (!(d > 0.0 && d <= 100.0)) throw ValidationError("density must lie in (0, 100]");
    return d;
}

TrainConfig train_config(const json& cfg, const TaskKind& task) {
    const json& t = cfg["train"];
    TrainConfig c = TrainConfig::defaults_for(task);
    c.model = parse_model_kind(t["model"].get<std::string>());
    if (!t["epochs"].is_null()) c.epochs = t["epochs"].get<std::size_t>();
    if (!t["lr"].is_null()) c.lr = t["lr"].get<double>();
    c.weight_decay = t["weight_decay"].get<double>();
    c.dropout = t["dropout"].get<double>();
    c.seed = cfg["seed"].get<std::uint64_t>();
    c.num_layers = t["num_layers"].get<std::size_t>();
    c.hidden_dim = t["hidden_dim"].get<std::size_t>();
    const std::string readout = t["readout"].get<std::string>();
    if (readout != "sort_pool" && readout != "mean") throw ValidationError("readout must be sort_pool or mean");
    c.readout = readout == "mean" ? Readout::mean : Readout::sort_pool;
    c.sort_k = t["sort_k"].get<std::size_t>();
    c.mlp_hidden = t["mlp_hidden"].get<std::vector<std::size_t>>();
    c.batch_size = t["batch_size"].get<std::size_t>();
    c.normalize_targets = t["normalize_targets"].get<bool>();
    const json& s = cfg["split"];
    c.fractions = {s["train"].get<double>(), s["val"].get<double>(), s["test"].get<double>()};
    c.validate();
    return c;
}

fs::path dataset_input(const Flags& f, const json& cfg, const fs::path& out) {
    if (!f.input.empty()) return f.input;
    return out / "dataset" / (cfg["train"]["model"] == "dyn" ? "dynamic" : "static");
}

SplitSpec split_for(const GraphDataset& ds, const fs::path& dir, const TrainConfig& c) {
    const fs::path stored = dir / "splits" / ("seed" + std::to_string(c.seed) + ".json");
    if (fs::exists(stored)) return load_split(stored);
    return stratified_split(ds, c.fractions, c.seed);
}

json metrics_summary(const Metrics& m) {
    return {{"metric", m.metric_name()}, {"train", m.train.metric}, {"val", m.val.metric}, {"test", m.test.metric}};
}

void print_metrics(const Metrics& m) {
    std::printf("%-6s %10s %10s %6s\n", "split", m.metric_name(), "loss", "n");
    const std::pair<const char*, const SplitScore*> rows[] = {{"train", &m.train}, {"val", &m.val}, {"test", &m.test}};
    for (const auto& [name, s] : rows) std::printf("%-6s %10.4f %10.4f %6zu\n", name, s->metric, s->loss, s->count);
}

// ------------------------------------------------------------ subcommands

json cmd_synth(const json& cfg, const Flags&, const fs::path& out) {
    const json& s = cfg["synth"];
    SyntheticSpec spec;
    spec.n_subjects = s["subjects"].get<std::size_t>();
    spec.n_rois = cfg["rois"].get<std::size_t>();
    spec.n_timepoints = s["timepoints"].get<std::size_t>();
    spec.n_classes = s["classes"].get<std::size_t>();
    spec.block_size = s["block_size"].get<std::size_t>();
    spec.within_block_corr = s["within_block_corr"].get<double>();
    spec.noise_sd = s["noise_sd"].get<double>();
    spec.seed = s["seed"].get<std::uint64_t>();
    const SeriesFormat fmt = parse_series_format(s["format"].get<std::string>());
    const fs::path dir = out / "timeseries";
    fs::create_directories(dir);
    const auto corpus = generate_synthetic(spec);
    for (const auto& ts : corpus) save_timeseries(ts, dir / (ts.subject_id + (fmt == SeriesFormat::csv ? ".csv" : ".bin")), fmt);
    std::printf("wrote %zu subjects (%zu ROIs, %zu timepoints) to %s\n", corpus.size(), spec.n_rois,
                spec.n_timepoints, dir.string().c_str());
    return {{"subjects", corpus.size()}, {"rois", spec.n_rois}, {"timepoints", spec.n_timepoints}, {"output", dir}};
}

json cmd_preprocess(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = f.input.empty() ? out / "timeseries" : fs::path(f.input);
    const std::string nuisance = cfg["preprocess"]["nuisance_dir"].get<std::string>();
    const bool deriv = cfg["preprocess"]["derivatives"].get<bool>();
    if (!nuisance.empty()) require_dir(nuisance, "nuisance directory");
    const fs::path dir = out / "clean";
    fs::create_directories(dir);
    json prov = json::object();
    std::size_t count = 0, rois = 0;
    for (const auto& p : series_files(in)) {
        const RoiTimeSeries ts = load_timeseries(p, series_format_for(p));
        check_rois(f, cfg, ts.rois());
        rois = ts.rois();
        CleanTimeSeries clean;
        if (nuisance.empty()) {
            clean = preprocess(ts, nullptr);
        } else {
            fs::path motion = fs::path(nuisance) / (ts.subject_id + ".txt");
            if (!fs::exists(motion)) motion.replace_extension(".csv");
            if (!fs::exists(motion)) throw IoError("no motion file for " + ts.subject_id + " in " + nuisance);
            const NuisanceDesign design = load_nuisance(motion, ts.timepoints(), deriv);
            clean = preprocess(ts, &design);
        }
        RoiTimeSeries saved{clean.data, clean.tr_seconds, clean.subject_id, clean.label};
        save_timeseries(saved, dir / p.filename(), series_format_for(p));
        prov[clean.subject_id] = {{"regressors", clean.provenance.regressors},
                                  {"normalized", clean.provenance.normalized},
                                  {"degenerate_rois", clean.provenance.degenerate_rois}};
        ++count;
    }
    write_text(dir / "provenance.json", prov.dump(2) + "\n");
    std::printf("preprocessed %zu subjects (%zu ROIs) into %s\n", count, rois, dir.string().c_str());
    return {{"subjects", count}, {"rois", rois}, {"input", in}, {"output", dir}};
}

json cmd_build_static(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = f.input.empty() ? out / "clean" : fs::path(f.input);
    const auto series = load_clean(in);
    check_rois(f, cfg, series.front().rois());
    const FeatureKind feature = parse_feature_kind(cfg["static"]["features"].get<std::string>());
    const double density = parse_density_value(cfg["static"]["density"]);
    const GraphDataset ds = make_static_dataset(series, feature, density, "static");
    const fs::path dir = out / "dataset" / "static";
    save_dataset(ds, dir);
    std::printf("built %zu static graphs (%zu ROIs, %s, top %g%%) in %s\n", ds.size(), ds.provenance.rois,
                to_string(feature).c_str(), density, dir.string().c_str());
    return {{"graphs", ds.size()}, {"rois", ds.provenance.rois}, {"output", dir}};
}

json cmd_build_dynamic(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = f.input.empty() ? out / "clean" : fs::path(f.input);
    const auto series = load_clean(in);
    check_rois(f, cfg, series.front().rois());
    const json& d = cfg["dynamic"];
    const FeatureKind feature = parse_feature_kind(d["features"].get<std::string>());
    const double density = parse_density_value(d["density"]);
    const GraphDataset ds =
        make_dynamic_dataset(series, feature, density, d["gamma"].get<std::size_t>(), d["stride"].get<std::size_t>(),
                             d["crop_len"].get<std::size_t>(), cfg["seed"].get<std::uint64_t>(), "dynamic");
    const fs::path dir = out / "dataset" / "dynamic";
    save_dataset(ds, dir);
    std::printf("built %zu sequences of %zu frames (%zu ROIs, %s, top %g%%) in %s\n", ds.size(),
                ds.provenance.frames_per_subject, ds.provenance.rois, to_string(feature).c_str(), density,
                dir.string().c_str());
    return {{"sequences", ds.size()},
            {"frames_per_subject", ds.provenance.frames_per_subject},
            {"rois", ds.provenance.rois},
            {"output", dir}};
}

json cmd_stats(const json&, const Flags& f, const fs::path& out) {
    const fs::path in = f.input.empty() ? out / "dataset" / "static" : fs::path(f.input);
    const GraphDataset ds = load_dataset(require_dir(in, "dataset directory"));
    std::vector<StaticGraph> graphs = ds.graphs;
    for (const auto& s : ds.sequences) graphs.insert(graphs.end(), s.frames.begin(), s.frames.end());
    const DatasetStats st = aggregate_stats(graphs);
    const std::string table = stats_to_table({{ds.name, st}});
    std::fputs(table.c_str(), stdout);
    write_text(out / "stats.txt", table);
    write_text(out / "stats.json", stats_to_json(st, ds.name) + "\n");
    return json::parse(stats_to_json(st, ds.name));
}

json cmd_split(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = dataset_input(f, cfg, out);
    const GraphDataset ds = load_dataset(require_dir(in, "dataset directory"));
    const TrainConfig c = train_config(cfg, ds.task);
    const SplitSpec split = stratified_split(ds, c.fractions, c.seed);
    const fs::path path = save_split(split, in);
    std::printf("split %zu graphs: train %zu, val %zu, test %zu -> %s\n", split.total(), split.train.size(),
                split.val.size(), split.test.size(), path.string().c_str());
    return {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}, {"output", path}};
}

json cmd_train(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = dataset_input(f, cfg, out);
    const GraphDataset ds = load_dataset(require_dir(in, "dataset directory"));
    const TrainConfig c = train_config(cfg, ds.task);
    const TrainResult r = train(c, ds, split_for(ds, in, c));
    const fs::path dir = out / "train";
    save_checkpoint(r, c, dir);
    write_text(dir / "metrics.json", metrics_to_json(r.metrics) + "\n");
    print_metrics(r.metrics);
    std::printf("best epoch %zu, %.1f s; checkpoint in %s\n", r.metrics.best_epoch, r.metrics.wall_seconds,
                dir.string().c_str());
    json details = metrics_summary(r.metrics);
    details["best_epoch"] = r.metrics.best_epoch;
    details["checkpoint"] = dir;
    return details;
}

json cmd_evaluate(const json& cfg, const Flags& f, const fs::path& out) {
    const fs::path in = dataset_input(f, cfg, out);
    const fs::path ckpt_dir = f.checkpoint.empty() ? out / "train" : fs::path(f.checkpoint);
    const Checkpoint ckpt = load_checkpoint(require_dir(ckpt_dir, "checkpoint directory"));
    const GraphDataset ds = load_dataset(require_dir(in, "dataset directory"));
    const TrainConfig c = train_config(cfg, ds.task);
    const Metrics m = evaluate(ckpt, ds, split_for(ds, in, c));
    write_text(out / "evaluate.json", metrics_to_json(m) + "\n");
    print_metrics(m);
    return metrics_summary(m);
}

json cmd_probe(const json& cfg, const Flags& f, const fs::path& out) {
    const json& p = cfg["probe"];
    ProbeGrid grid;
    grid.features.clear();
    for (const auto& s : p["features"]) grid.features.push_back(parse_feature_kind(s.get<std::string>()));
    grid.rois = p["rois"].get<std::vector<std::size_t>>();
    grid.densities.clear();
    for (const auto& d : p["densities"]) grid.densities.push_back(parse_density_value(d));

    ProbeReport report;
    if (!f.input.empty()) {
        const auto series = load_clean(f.input);
        report = run_probe(grid, train_config(cfg, infer_task([&] {
                               std::vector<std::optional<Label>> l;
                               for (const auto& s : series) l.push_back(s.label);
                               return l;
                           }())),
                           [&series](std::size_t) { return series; });
    } else {
        SyntheticSpec spec;
        const json& s = cfg["synth"];
        spec.n_subjects = p["subjects"].get<std::size_t>();
        spec.n_timepoints = p["timepoints"].get<std::size_t>();
        spec.n_classes = s["classes"].get<std::size_t>();
        spec.block_size = s["block_size"].get<std::size_t>();
        spec.within_block_corr = s["within_block_corr"].get<double>();
        spec.noise_sd = s["noise_sd"].get<double>();
        spec.seed = s["seed"].get<std::uint64_t>();
        report = run_probe(grid, train_config(cfg, TaskKind::classification(spec.n_classes)), spec);
    }
    const fs::path dir = out / "probe";
    save_probe_report(report, dir);
    std::fputs(probe_to_table(report).c_str(), stdout);
    return {{"rows", report.rows.size()}, {"output", dir}};
}

using Handler = json (*)(const json&, const Flags&, const fs::path&);

void record_run(const fs::path& out, const std::string& command, const json& cfg, const json& details,
                double seconds) {
    const std::string dumped = cfg.dump();
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(dumped)));
    write_text(out / "config.json", cfg.dump(2) + "\n");
    write_text(out / "configs" / (command + ".json"), cfg.dump(2) + "\n");

    json manifest;
    const fs::path path = out / "run_manifest.json";
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            manifest = json::parse(in);
        } catch (const json::exception&) {
            manifest = json::object();
        }
    }
    manifest["toolkit_version"] = kToolkitVersion;
    manifest["run_directory"] = out;
    if (!manifest.contains("commands")) manifest["commands"] = json::array();
    manifest["commands"].push_back({{"command", command},
                                    {"config_hash", hash},
                                    {"config", "configs/" + command + ".json"},
                                    {"seconds", seconds},
                                    {"details", details}});
    write_text(path, manifest.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brain graph toolkit: ROI time series to static and dynamic graphs, statistics and GNN training"};
    app.footer(kPrecedence);
    app.require_subcommand(1);

    Flags f;
    const std::vector<std::pair<std::string, std::pair<Handler, std::string>>> commands = {
        {"synth", {cmd_synth, "Generate a planted synthetic ROI corpus"}},
        {"preprocess", {cmd_preprocess, "Nuisance regression (optional) and normalisation"}},
        {"build-static", {cmd_build_static, "Build one thresholded graph per subject"}},
        {"build-dynamic", {cmd_build_dynamic, "Build sliding-window graph sequences"}},
        {"stats", {cmd_stats, "Graph statistics table for a dataset"}},
        {"split", {cmd_split, "Write a stratified train/val/test split"}},
        {"train", {cmd_train, "Train a model and keep the best-validation checkpoint"}},
        {"evaluate", {cmd_evaluate, "Score a checkpoint on a dataset split"}},
        {"probe", {cmd_probe, "Feature x ROI x density probe on the planted corpus"}},
    };
    std::map<CLI::App*, std::pair<std::string, Handler>> handlers;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.second);
        sub->footer(kPrecedence);
        f.given["config"] = sub->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
        f.given["seed"] = sub->add_option("--seed", f.seed, "Global seed (split, training, crops)");
        f.given["rois"] = sub->add_option("--rois", f.rois, "ROI count")->check(CLI::IsMember({100, 400, 1000}));
        f.given["density"] = sub->add_option("--density", f.density, "Top percent of edges kept")
                                 ->check(CLI::IsMember({5.0, 10.0, 20.0}));
        f.given["features"] =
            sub->add_option("--features", f.features, "Node features")->check(CLI::IsMember({"corr", "bold", "corr_bold"}));
        f.given["gamma"] = sub->add_option("--gamma", f.gamma, "Window length");
        f.given["stride"] = sub->add_option("--stride", f.stride, "Window stride");
        f.given["crop-len"] = sub->add_option("--crop-len,--l", f.crop_len, "Crop length l");
        f.given["model"] =
            sub->add_option("--model", f.model, "Model")->check(CLI::IsMember({"gcn", "gnnstar", "mlp", "dyn"}));
        f.given["epochs"] = sub->add_option("--epochs", f.epochs, "Training epochs");
        f.given["lr"] = sub->add_option("--lr", f.lr, "Learning rate");
        sub->add_option("--out", f.out, "Run directory")->capture_default_str();
        sub->add_option("--input", f.input, "Input directory (defaults to the run directory stage)");
        sub->add_option("--checkpoint", f.checkpoint, "Checkpoint directory for evaluate");
        handlers[sub] = {name, entry.first};
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    // Options are registered per subcommand; keep the ones of the chosen one.
    CLI::App* chosen = app.get_subcommands().front();
    for (auto& [key, opt] : f.given) opt = chosen->get_option_no_throw(opt->get_name());
    for (auto it = f.given.begin(); it != f.given.end();)
        it = it->second ? std::next(it) : f.given.erase(it);

    const auto& [name, handler] = handlers.at(chosen);
    try {
        const auto t0 = std::chrono::steady_clock::now();
        const json cfg = resolve_config(f, name);
        const fs::path out = f.out;
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) throw IoError("cannot create run directory " + out.string() + ": " + ec.message());
        const json details = handler(cfg, f, out);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        record_run(out, name, cfg, details, seconds);
        return 0;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error: invalid config value: %s\n", e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
