#include "braingraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "braingraph/error.hpp"
#include "braingraph/random.hpp"

namespace braingraph {

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "corr" || name == "CORR") return FeatureKind::corr;
    if (name == "bold" || name == "BOLD") return FeatureKind::bold;
    if (name == "corr_bold" || name == "CORR_BOLD" || name == "corr+bold") return FeatureKind::corr_bold;
    throw ValidationError("unknown feature kind '" + name + "' (expected corr, bold or corr_bold)");
}

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::corr: return "corr";
        case FeatureKind::bold: return "bold";
        case FeatureKind::corr_bold: return "corr_bold";
    }
    return "?";
}

std::size_t feature_dim(FeatureKind kind, std::size_t n, std::size_t length) {
    switch (kind) {
        case FeatureKind::corr: return n;
        case FeatureKind::bold: return length;
        case FeatureKind::corr_bold: return n + length;
    }
    return 0;
}

std::string density_name(double top_percent) {
    if (top_percent == kSparse5) return "sparse5";
    if (top_percent == kMedium10) return "medium10";
    if (top_percent == kDense20) return "dense20";
    char buf[32];
    std::snprintf(buf, sizeof buf, "top%g", top_percent);
    return buf;
}

double parse_density(const std::string& name) {
    if (name == "sparse5" || name == "sparse") return kSparse5;
    if (name == "medium10" || name == "medium") return kMedium10;
    if (name == "dense20" || name == "dense") return kDense20;
    std::string digits = name.rfind("top", 0) == 0 ? name.substr(3) : name;
    if (!digits.empty() && digits.back() == '%') digits.pop_back();
    char* end = nullptr;
    const double p = std::strtod(digits.c_str(), &end);
    if (digits.empty() || end != digits.c_str() + digits.size() || !(p > 0.0 && p <= 100.0))
        throw ValidationError("invalid density '" + name + "' (expected a percentage in (0, 100])");
    return p;
}

void StaticGraph::validate() const {
    if (features.rows() != n)
        throw ValidationError("feature matrix has " + std::to_string(features.rows()) + " rows for " +
                              std::to_string(n) + " nodes");
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Edge& ed = edges[e];
        if (ed.i >= ed.j) throw ValidationError("edge " + std::to_string(e) + " is a self loop or not ordered i < j");
        if (ed.j >= n) throw ValidationError("edge " + std::to_string(e) + " references node beyond n");
        if (e > 0 && !(edges[e - 1] < ed)) throw ValidationError("edges are not sorted or contain duplicates");
    }
    if (!features.all_finite()) throw ValidationError("features contain non-finite values");
}

std::size_t top_count(double top_percent, std::size_t candidates) {
    if (!(top_percent > 0.0 && top_percent <= 100.0))
        throw ValidationError("top_percent must lie in (0, 100], got " + std::to_string(top_percent));
    if (candidates == 0) return 0;
    const double exact = top_percent * static_cast<double>(candidates) / 100.0;
    const double nearest = std::round(exact);
    double k = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
    k = std::clamp(k, 1.0, static_cast<double>(candidates));
    return static_cast<std::size_t>(k);
}

EdgeSelection threshold_edges(const ConnectivityMatrix& cm, double top_percent) {
    struct Candidate {
        double value;
        std::uint32_t i, j;
    };
    const std::size_t n = cm.size();
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (cm(i, j) > 0.0) cands.push_back({cm(i, j), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});

    EdgeSelection sel;
    sel.candidates = cands.size();
    const std::size_t k = top_count(top_percent, cands.size());
    if (k == 0) return sel;

    const auto by_value_desc = [](const Candidate& a, const Candidate& b) { return a.value > b.value; };
    std::nth_element(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k - 1), cands.end(), by_value_desc);
    sel.cutoff = cands[k - 1].value;
    for (const Candidate& c : cands)
        if (c.value >= sel.cutoff) sel.edges.push_back({c.i, c.j});
    std::sort(sel.edges.begin(), sel.edges.end());
    return sel;
}

Matrix node_features(const CleanTimeSeries& ts, const ConnectivityMatrix& cm, FeatureKind kind) {
    const std::size_t n = ts.rois();
    const std::size_t t = ts.timepoints();
    if (cm.size() != n)
        throw ValidationError("connectivity is " + std::to_string(cm.size()) + "x" + std::to_string(cm.size()) +
                              " but series has " + std::to_string(n) + " ROIs");
    Matrix x(n, feature_dim(kind, n, t));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = 0;
        if (kind != FeatureKind::bold)
            for (std::size_t j = 0; j < n; ++j) x(i, col++) = cm(i, j);
        if (kind != FeatureKind::corr)
            for (std::size_t r = 0; r < t; ++r) x(i, col++) = ts.data(r, i);
    }
    return x;
}

StaticGraph build_static(const CleanTimeSeries& ts, const ConnectivityMatrix& cm, FeatureKind kind,
                         double top_percent) {
    StaticGraph g;
    g.n = ts.rois();
    g.features = node_features(ts, cm, kind);
    g.edges = threshold_edges(cm, top_percent).edges;
    g.label = ts.label;
    g.feature_kind = kind;
    g.top_percent = top_percent;
    g.subject_id = ts.subject_id;
    return g;
}

void DynamicGraphSequence::validate() const {
    if (frames.empty()) throw ValidationError("dynamic sequence has no frames");
    if (stride < 1 || gamma < 2 || gamma > crop_length) throw ValidationError("invalid window parameters");
    if (frames.size() != frame_count(crop_length, gamma, stride))
        throw ValidationError("dynamic sequence has " + std::to_string(frames.size()) + " frames, expected " +
                              std::to_string(frame_count(crop_length, gamma, stride)));
    for (const StaticGraph& f : frames) {
        f.validate();
        if (f.n != frames.front().n || f.feature_kind != frames.front().feature_kind ||
            f.features.cols() != frames.front().features.cols())
            throw ValidationError("dynamic frames differ in node count or feature configuration");
    }
}

std::size_t frame_count(std::size_t crop_length, std::size_t gamma, std::size_t stride) {
    if (stride < 1) throw ValidationError("stride must be >= 1");
    if (gamma > crop_length) throw ValidationError("window length exceeds crop length");
    return (crop_length - gamma) / stride + 1;
}

DynamicGraphSequence build_dynamic(const CleanTimeSeries& ts, FeatureKind kind, std::size_t gamma,
                                   std::size_t stride, std::size_t crop_length, std::uint64_t crop_seed,
                                   double top_percent) {
    const std::size_t t = ts.timepoints();
    if (crop_length > t)
        throw ValidationError("crop length " + std::to_string(crop_length) + " exceeds series length " +
                              std::to_string(t));
    if (gamma < 2) throw ValidationError("window length must be >= 2");
    if (gamma > crop_length) throw ValidationError("window length exceeds crop length");
    if (stride < 1) throw ValidationError("stride must be >= 1");
    top_count(top_percent, 1);  // validates the percentage before entering the parallel region

    DynamicGraphSequence seq;
    seq.gamma = gamma;
    seq.stride = stride;
    seq.crop_length = crop_length;
    seq.subject_id = ts.subject_id;
    seq.label = ts.label;
    seq.feature_kind = kind;
    seq.top_percent = top_percent;
    Rng rng(crop_seed);
    seq.crop_start = static_cast<std::size_t>(rng.uniform_index(t - crop_length + 1));

    const std::size_t frames = frame_count(crop_length, gamma, stride);
    seq.frames.resize(frames);
    const auto count = static_cast<std::int64_t>(frames);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < count; ++k) {
        const std::size_t start = seq.crop_start + static_cast<std::size_t>(k) * stride;
        const CleanTimeSeries win = normalized_window(ts, start, gamma);
        ConnectivityMatrix cm = correlation_matrix(win.data);
        cm.window = Window{start, gamma};
        seq.frames[static_cast<std::size_t>(k)] = build_static(win, cm, kind, top_percent);
    }
    return seq;
}

std::vector<double> upper_triangle(const Matrix& square) {
    const std::size_t n = square.rows();
    std::vector<double> out;
    out.reserve(n * (n > 0 ? n - 1 : 0) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.push_back(square(i, j));
    return out;
}

}  // namespace braingraph
