#include "braingraph/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "braingraph/connectivity.hpp"
#include "braingraph/error.hpp"
#include "braingraph/random.hpp"
#include "braingraph/version.hpp"
#include "json.hpp"

namespace braingraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kStaticMagic[4] = {'N', 'G', 'G', 'R'};
constexpr char kDynamicMagic[4] = {'N', 'G', 'D', 'S'};

enum : std::uint8_t { kLabelNone = 0, kLabelClass = 1, kLabelValue = 2 };

class BlobWriter {
public:
    template <typename T>
    void put(T v) {
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        bytes_.append(b, sizeof(T));
    }
    void put_raw(const char* p, std::size_t n) { bytes_.append(p, n); }
    std::string take() { return std::move(bytes_); }

private:
    std::string bytes_;
};

class BlobReader {
public:
    BlobReader(const std::string& bytes, std::size_t graph_index) : bytes_(bytes), index_(graph_index) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void get_raw(char* out, std::size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    void expect_magic(const char (&magic)[4]) {
        char m[4];
        get_raw(m, 4);
        if (std::memcmp(m, magic, 4) != 0) throw LoadError("bad blob magic", index_);
    }
    void expect_end() const {
        if (pos_ != bytes_.size()) throw LoadError("trailing bytes after graph record", index_);
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw LoadError("truncated blob", index_);
    }
    const std::string& bytes_;
    std::size_t index_;
    std::size_t pos_ = 0;
};

void put_graph_body(BlobWriter& w, const StaticGraph& g) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.n));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.features.cols()));
    w.put<std::uint64_t>(g.edges.size());
    for (const Edge& e : g.edges) {
        w.put<std::uint32_t>(e.i);
        w.put<std::uint32_t>(e.j);
    }
    for (double v : g.features.values()) w.put<float>(static_cast<float>(v));
}

StaticGraph get_graph_body(BlobReader& r, std::size_t graph_index) {
    StaticGraph g;
    g.n = r.get<std::uint32_t>();
    const std::uint32_t d = r.get<std::uint32_t>();
    const std::uint64_t m = r.get<std::uint64_t>();
    if (m > r.remaining() / 8) throw LoadError("truncated blob (edge list)", graph_index);
    g.edges.resize(m);
    for (auto& e : g.edges) {
        e.i = r.get<std::uint32_t>();
        e.j = r.get<std::uint32_t>();
    }
    const std::uint64_t cells = static_cast<std::uint64_t>(g.n) * d;
    if (cells > r.remaining() / sizeof(float)) throw LoadError("truncated blob (features)", graph_index);
    g.features = Matrix(g.n, d);
    for (double& v : g.features.values()) v = static_cast<double>(r.get<float>());
    return g;
}

void put_label(BlobWriter& w, const std::optional<Label>& label) {
    if (!label) {
        w.put<std::uint8_t>(kLabelNone);
        w.put<std::int64_t>(0);
    } else if (is_class_label(*label)) {
        w.put<std::uint8_t>(kLabelClass);
        w.put<std::int64_t>(std::get<std::int64_t>(*label));
    } else {
        w.put<std::uint8_t>(kLabelValue);
        w.put<double>(std::get<double>(*label));
    }
}

std::optional<Label> get_label(BlobReader& r, std::size_t graph_index) {
    const auto kind = r.get<std::uint8_t>();
    switch (kind) {
        case kLabelNone: r.get<std::int64_t>(); return std::nullopt;
        case kLabelClass: return Label{r.get<std::int64_t>()};
        case kLabelValue: return Label{r.get<double>()};
        default: throw LoadError("unknown label kind " + std::to_string(kind), graph_index);
    }
}

void check_version(std::uint32_t version, std::size_t graph_index) {
    if (version != kDatasetFormatVersion)
        throw VersionError("unsupported blob version " + std::to_string(version), graph_index);
}

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string read_all(const fs::path& p, std::size_t graph_index) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LoadError("cannot open " + p.string(), graph_index);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_all(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + p.string());
}

std::string blob_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "graphs/%06zu.bin", i);
    return buf;
}

void check_label(const std::optional<Label>& label, const TaskKind& task, std::size_t index) {
    if (!label) throw LoadError("graph has no label", index);
    if (task.is_classification()) {
        if (!is_class_label(*label)) throw LoadError("regression label in a classification dataset", index);
        const auto c = std::get<std::int64_t>(*label);
        if (c < 0 || static_cast<std::size_t>(c) >= task.num_classes)
            throw LoadError("class label " + std::to_string(c) + " outside [0, " + std::to_string(task.num_classes) + ")",
                            index);
    } else {
        if (is_class_label(*label)) throw LoadError("class label in a regression dataset", index);
        if (!std::isfinite(std::get<double>(*label))) throw LoadError("non-finite regression target", index);
    }
}

}  // namespace

std::optional<Label> GraphDataset::label(std::size_t index) const {
    return kind == GraphKind::static_graph ? graphs.at(index).label : sequences.at(index).label;
}

const std::string& GraphDataset::subject_id(std::size_t index) const {
    return kind == GraphKind::static_graph ? graphs.at(index).subject_id : sequences.at(index).subject_id;
}

void GraphDataset::validate() const {
    if (size() == 0) throw ValidationError("dataset '" + name + "' is empty");
    if (task.is_classification() && task.num_classes < 1) throw ValidationError("classification needs >= 1 class");
    if (kind == GraphKind::static_graph && !sequences.empty()) throw ValidationError("static dataset holds sequences");
    if (kind == GraphKind::dynamic_sequence && !graphs.empty()) throw ValidationError("dynamic dataset holds graphs");
    for (std::size_t i = 0; i < size(); ++i) {
        try {
            if (kind == GraphKind::static_graph) {
                graphs[i].validate();
            } else {
                sequences[i].validate();
            }
        } catch (const ValidationError& e) {
            throw LoadError(e.what(), i);
        }
        check_label(label(i), task, i);
    }
}

std::string encode_static_blob(const StaticGraph& g) {
    BlobWriter w;
    w.put_raw(kStaticMagic, 4);
    w.put<std::uint32_t>(kDatasetFormatVersion);
    put_graph_body(w, g);
    put_label(w, g.label);
    return w.take();
}

StaticGraph decode_static_blob(const std::string& bytes, std::size_t graph_index) {
    BlobReader r(bytes, graph_index);
    r.expect_magic(kStaticMagic);
    check_version(r.get<std::uint32_t>(), graph_index);
    StaticGraph g = get_graph_body(r, graph_index);
    g.label = get_label(r, graph_index);
    r.expect_end();
    return g;
}

std::string encode_dynamic_blob(const DynamicGraphSequence& seq) {
    BlobWriter w;
    w.put_raw(kDynamicMagic, 4);
    w.put<std::uint32_t>(kDatasetFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.frames.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.gamma));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.stride));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.crop_length));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.crop_start));
    for (const StaticGraph& f : seq.frames) put_graph_body(w, f);
    put_label(w, seq.label);
    return w.take();
}

DynamicGraphSequence decode_dynamic_blob(const std::string& bytes, std::size_t graph_index) {
    BlobReader r(bytes, graph_index);
    r.expect_magic(kDynamicMagic);
    check_version(r.get<std::uint32_t>(), graph_index);
    DynamicGraphSequence seq;
    const std::uint32_t frames = r.get<std::uint32_t>();
    seq.gamma = r.get<std::uint32_t>();
    seq.stride = r.get<std::uint32_t>();
    seq.crop_length = r.get<std::uint32_t>();
    seq.crop_start = r.get<std::uint32_t>();
    if (frames > r.remaining() / 16) throw LoadError("truncated blob (frames)", graph_index);
    seq.frames.reserve(frames);
    for (std::uint32_t f = 0; f < frames; ++f) seq.frames.push_back(get_graph_body(r, graph_index));
    seq.label = get_label(r, graph_index);
    r.expect_end();
    return seq;
}

fs::path save_dataset(const GraphDataset& ds, const fs::path& dir) {
    ds.validate();
    std::error_code ec;
    fs::create_directories(dir / "graphs", ec);
    if (ec) throw IoError("cannot create " + (dir / "graphs").string() + ": " + ec.message());

    json entries = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string bytes = ds.kind == GraphKind::static_graph ? encode_static_blob(ds.graphs[i])
                                                                     : encode_dynamic_blob(ds.sequences[i]);
        const std::string rel = blob_name(i);
        write_all(dir / rel, bytes);
        entries.push_back({{"file", rel}, {"subject_id", ds.subject_id(i)}, {"bytes", bytes.size()}, {"crc32", crc_of(bytes)}});
    }
    const auto& p = ds.provenance;
    json prov{{"feature", to_string(p.feature)},
              {"threshold_percent", p.threshold_percent},
              {"rois", p.rois},
              {"pipeline_version", p.pipeline_version}};
    if (ds.kind == GraphKind::dynamic_sequence) {
        prov["gamma"] = p.gamma;
        prov["stride"] = p.stride;
        prov["crop_length"] = p.crop_length;
        prov["frames_per_subject"] = p.frames_per_subject;
    }
    json task{{"kind", ds.task.is_classification() ? "classification" : "regression"}};
    if (ds.task.is_classification()) task["num_classes"] = ds.task.num_classes;
    const json manifest{{"format", "braingraph-dataset"},
                        {"format_version", kDatasetFormatVersion},
                        {"name", ds.name},
                        {"graph_kind", ds.kind == GraphKind::static_graph ? "static" : "dynamic"},
                        {"task", task},
                        {"provenance", prov},
                        {"graphs", entries}};
    const fs::path manifest_path = dir / "manifest.json";
    write_all(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

GraphDataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("no dataset manifest at " + manifest_path.string());
    json m;
    try {
        m = json::parse(read_all(manifest_path, LoadError::kNoIndex));
    } catch (const json::exception& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    }
    try {
        const auto version = m.at("format_version").get<std::uint32_t>();
        if (version != kDatasetFormatVersion)
            throw VersionError("unsupported dataset format version " + std::to_string(version) + " (supported: " +
                               std::to_string(kDatasetFormatVersion) + ")");
        GraphDataset ds;
        ds.name = m.at("name").get<std::string>();
        const auto& task = m.at("task");
        ds.task = task.at("kind").get<std::string>() == "classification"
                      ? TaskKind::classification(task.at("num_classes").get<std::size_t>())
                      : TaskKind::regression();
        const std::string kind = m.at("graph_kind").get<std::string>();
        if (kind != "static" && kind != "dynamic") throw LoadError("unknown graph_kind '" + kind + "'");
        ds.kind = kind == "static" ? GraphKind::static_graph : GraphKind::dynamic_sequence;
        const auto& prov = m.at("provenance");
        ds.provenance.feature = parse_feature_kind(prov.at("feature").get<std::string>());
        ds.provenance.threshold_percent = prov.at("threshold_percent").get<double>();
        ds.provenance.rois = prov.at("rois").get<std::size_t>();
        ds.provenance.pipeline_version = prov.value("pipeline_version", "");
        ds.provenance.gamma = prov.value("gamma", std::size_t{0});
        ds.provenance.stride = prov.value("stride", std::size_t{0});
        ds.provenance.crop_length = prov.value("crop_length", std::size_t{0});
        ds.provenance.frames_per_subject = prov.value("frames_per_subject", std::size_t{0});

        const auto& entries = m.at("graphs");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            const fs::path blob = dir / e.at("file").get<std::string>();
            if (!fs::exists(blob)) throw LoadError("missing blob " + blob.string(), i);
            const std::string bytes = read_all(blob, i);
            if (bytes.size() != e.at("bytes").get<std::size_t>())
                throw LoadError("blob size " + std::to_string(bytes.size()) + " differs from manifest (" +
                                    std::to_string(e.at("bytes").get<std::size_t>()) + "); truncated or corrupted",
                                i);
            if (crc_of(bytes) != e.at("crc32").get<std::uint32_t>()) throw LoadError("checksum mismatch", i);
            const std::string subject = e.value("subject_id", "");
            if (ds.kind == GraphKind::static_graph) {
                StaticGraph g = decode_static_blob(bytes, i);
                g.feature_kind = ds.provenance.feature;
                g.top_percent = ds.provenance.threshold_percent;
                g.subject_id = subject;
                ds.graphs.push_back(std::move(g));
            } else {
                DynamicGraphSequence s = decode_dynamic_blob(bytes, i);
                s.feature_kind = ds.provenance.feature;
                s.top_percent = ds.provenance.threshold_percent;
                s.subject_id = subject;
                for (auto& f : s.frames) {
                    f.feature_kind = s.feature_kind;
                    f.top_percent = s.top_percent;
                    f.subject_id = subject;
                    f.label = s.label;
                }
                ds.sequences.push_back(std::move(s));
            }
        }
        ds.validate();
        return ds;
    } catch (const json::exception& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    } catch (const LoadError&) {
        throw;
    } catch (const ValidationError& e) {
        throw LoadError(manifest_path.string() + ": " + e.what());
    }
}

std::array<std::size_t, 3> allocate_counts(std::size_t count, const SplitFractions& f) {
    const std::array<double, 3> fr{f.train, f.val, f.test};
    std::array<std::size_t, 3> out{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        const double quota = fr[k] * static_cast<double>(count);
        const double fl = std::floor(quota + 1e-9);
        out[k] = static_cast<std::size_t>(fl);
        rem[k] = quota - fl;
        assigned += out[k];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
    for (std::size_t r = 0; assigned < count; ++r, ++assigned) ++out[order[r % 3]];
    return out;
}

namespace {

void validate_fractions(const SplitFractions& f) {
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
        throw ValidationError("split fractions must be non-negative and sum to 1");
}

}  // namespace

SplitSpec stratified_split(const std::vector<std::int64_t>& classes, std::size_t num_classes,
                           const SplitFractions& fractions, std::uint64_t seed) {
    validate_fractions(fractions);
    if (classes.empty()) throw ValidationError("cannot split an empty label list");
    for (auto c : classes)
        if (c < 0) throw ValidationError("negative class label " + std::to_string(c));
    if (num_classes == 0) num_classes = static_cast<std::size_t>(*std::max_element(classes.begin(), classes.end())) + 1;

    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const auto c = static_cast<std::size_t>(classes[i]);
        if (c >= num_classes)
            throw ValidationError("class label " + std::to_string(c) + " outside [0, " + std::to_string(num_classes) + ")");
        members[c].push_back(i);
    }
    SplitSpec split;
    split.seed = seed;
    split.fractions = fractions;
    Rng rng(seed);
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& idx = members[c];
        if (idx.empty()) throw ValidationError("class " + std::to_string(c) + " has no samples");
        rng.shuffle(idx);
        const auto counts = allocate_counts(idx.size(), fractions);
        auto it = idx.begin();
        split.train.insert(split.train.end(), it, it + static_cast<std::ptrdiff_t>(counts[0]));
        it += static_cast<std::ptrdiff_t>(counts[0]);
        split.val.insert(split.val.end(), it, it + static_cast<std::ptrdiff_t>(counts[1]));
        it += static_cast<std::ptrdiff_t>(counts[1]);
        split.test.insert(split.test.end(), it, idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

SplitSpec stratified_split_regression(const std::vector<double>& targets, const SplitFractions& fractions,
                                      std::uint64_t seed, std::size_t bins) {
    if (targets.empty()) throw ValidationError("cannot split an empty target list");
    bins = std::max<std::size_t>(1, std::min(bins, targets.size()));
    std::vector<std::size_t> order(targets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
    std::vector<std::int64_t> bin_of(targets.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        bin_of[order[rank]] = static_cast<std::int64_t>(rank * bins / order.size());
    return stratified_split(bin_of, bins, fractions, seed);
}

SplitSpec stratified_split(const GraphDataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
    if (ds.task.is_classification()) {
        std::vector<std::int64_t> classes(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto l = ds.label(i);
            if (!l || !is_class_label(*l)) throw ValidationError("graph " + std::to_string(i) + " lacks a class label");
            classes[i] = std::get<std::int64_t>(*l);
        }
        return stratified_split(classes, ds.task.num_classes, fractions, seed);
    }
    std::vector<double> targets(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto l = ds.label(i);
        if (!l) throw ValidationError("graph " + std::to_string(i) + " lacks a target");
        targets[i] = label_as_double(*l);
    }
    return stratified_split_regression(targets, fractions, seed);
}

fs::path save_split(const SplitSpec& split, const fs::path& dataset_dir) {
    const fs::path dir = dataset_dir / "splits";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const json j{{"seed", split.seed},
                 {"fractions", {split.fractions.train, split.fractions.val, split.fractions.test}},
                 {"train", split.train},
                 {"val", split.val},
                 {"test", split.test}};
    const fs::path path = dir / ("seed" + std::to_string(split.seed) + ".json");
    write_all(path, j.dump(2) + "\n");
    return path;
}

SplitSpec load_split(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no split file at " + path.string());
    try {
        const json j = json::parse(read_all(path, LoadError::kNoIndex));
        SplitSpec s;
        s.seed = j.at("seed").get<std::uint64_t>();
        const auto fr = j.at("fractions").get<std::vector<double>>();
        if (fr.size() != 3) throw LoadError(path.string() + ": fractions must have 3 entries");
        s.fractions = {fr[0], fr[1], fr[2]};
        s.train = j.at("train").get<std::vector<std::size_t>>();
        s.val = j.at("val").get<std::vector<std::size_t>>();
        s.test = j.at("test").get<std::vector<std::size_t>>();
        return s;
    } catch (const json::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::optional<std::int64_t> age_bracket(double age_years) {
    if (age_years >= 22 && age_years < 26) return 0;
    if (age_years >= 26 && age_years < 31) return 1;
    if (age_years >= 31 && age_years < 36) return 2;
    return std::nullopt;
}

TaskKind infer_task(const std::vector<std::optional<Label>>& labels) {
    if (labels.empty()) throw ValidationError("no labels to infer a task from");
    std::size_t classes = 0, reals = 0;
    std::int64_t top = -1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) throw ValidationError("subject " + std::to_string(i) + " has no label");
        if (is_class_label(*labels[i])) {
            const auto c = std::get<std::int64_t>(*labels[i]);
            if (c < 0) throw ValidationError("subject " + std::to_string(i) + " has a negative class label");
            top = std::max(top, c);
            ++classes;
        } else {
            ++reals;
        }
    }
    if (classes && reals) throw ValidationError("labels mix class indices and real values");
    return reals ? TaskKind::regression() : TaskKind::classification(static_cast<std::size_t>(top + 1));
}

namespace {

std::vector<std::optional<Label>> labels_of(const std::vector<CleanTimeSeries>& series) {
    std::vector<std::optional<Label>> out;
    for (const auto& s : series) out.push_back(s.label);
    return out;
}

}  // namespace

GraphDataset make_static_dataset(const std::vector<CleanTimeSeries>& series, FeatureKind feature, double top_percent,
                                 const std::string& name) {
    if (series.empty()) throw ValidationError("no time series to build graphs from");
    GraphDataset ds;
    ds.name = name;
    ds.kind = GraphKind::static_graph;
    ds.task = infer_task(labels_of(series));
    ds.graphs.resize(series.size());
    for (std::size_t s = 0; s < series.size(); ++s)
        ds.graphs[s] = build_static(series[s], pearson_full(series[s]), feature, top_percent);
    ds.provenance.feature = feature;
    ds.provenance.threshold_percent = top_percent;
    ds.provenance.rois = series.front().rois();
    ds.provenance.pipeline_version = kToolkitVersion;
    ds.validate();
    return ds;
}

GraphDataset make_dynamic_dataset(const std::vector<CleanTimeSeries>& series, FeatureKind feature, double top_percent,
                                  std::size_t gamma, std::size_t stride, std::size_t crop_length, std::uint64_t seed,
                                  const std::string& name) {
    if (series.empty()) throw ValidationError("no time series to build graphs from");
    GraphDataset ds;
    ds.name = name;
    ds.kind = GraphKind::dynamic_sequence;
    ds.task = infer_task(labels_of(series));
    for (const auto& s : series)
        ds.sequences.push_back(build_dynamic(s, feature, gamma, stride, crop_length, derive_seed(seed, s.subject_id),
                                             top_percent));
    ds.provenance.feature = feature;
    ds.provenance.threshold_percent = top_percent;
    ds.provenance.rois = series.front().rois();
    ds.provenance.pipeline_version = kToolkitVersion;
    ds.provenance.gamma = gamma;
    ds.provenance.stride = stride;
    ds.provenance.crop_length = crop_length;
    ds.provenance.frames_per_subject = frame_count(crop_length, gamma, stride);
    ds.validate();
    return ds;
}

}  // namespace braingraph
