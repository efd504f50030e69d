#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "braingraph/graph.hpp"
#include "braingraph/matrix.hpp"
#include "braingraph/preprocess.hpp"
#include "braingraph/random.hpp"

// Generators and brute-force oracles shared by the test binaries. Nothing in
// here calls into the library routine it is used to check.
namespace testsupport {

using braingraph::Edge;
using braingraph::Matrix;
using braingraph::Rng;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

inline braingraph::RoiTimeSeries raw_series(const Matrix& data, std::string id = "s") {
    braingraph::RoiTimeSeries ts;
    ts.data = data;
    ts.subject_id = std::move(id);
    return ts;
}

inline braingraph::CleanTimeSeries clean_series(const Matrix& data, std::string id = "s") {
    braingraph::CleanTimeSeries c;
    c.data = data;
    c.subject_id = std::move(id);
    return c;
}

// Two-pass Pearson correlation of columns i and j, straight from the textbook formula.
inline double naive_pearson(const Matrix& x, std::size_t i, std::size_t j) {
    const std::size_t t = x.rows();
    double mi = 0, mj = 0;
    for (std::size_t r = 0; r < t; ++r) {
        mi += x(r, i);
        mj += x(r, j);
    }
    mi /= static_cast<double>(t);
    mj /= static_cast<double>(t);
    double sij = 0, sii = 0, sjj = 0;
    for (std::size_t r = 0; r < t; ++r) {
        const double a = x(r, i) - mi, b = x(r, j) - mj;
        sij += a * b;
        sii += a * a;
        sjj += b * b;
    }
    return sij / std::sqrt(sii * sjj);
}

// Symmetric matrix with unit diagonal and continuous off-diagonal entries in (-1, 1).
inline Matrix random_symmetric_unit(std::size_t n, Rng& rng) {
    Matrix m = Matrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = rng.uniform(-0.999, 0.999);
    return m;
}

inline std::vector<Edge> random_graph(std::size_t n, double p, Rng& rng) {
    std::vector<Edge> edges;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = i + 1; j < n; ++j)
            if (rng.uniform01() < p) edges.push_back({i, j});
    return edges;
}

inline std::vector<std::vector<bool>> dense_adjacency(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<bool>> a(n, std::vector<bool>(n, false));
    for (const Edge& e : edges) a[e.i][e.j] = a[e.j][e.i] = true;
    return a;
}

struct BruteStats {
    std::uint64_t triangles = 0;
    std::uint64_t triples = 0;
    double transitivity = 0;
    double avg_local = 0;
    std::size_t d_max = 0;
};

// O(n^3) enumeration of triangles and connected triples.
inline BruteStats brute_stats(std::size_t n, const std::vector<Edge>& edges) {
    const auto a = dense_adjacency(n, edges);
    BruteStats s;
    double local_sum = 0;
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t deg = 0;
        for (std::size_t u = 0; u < n; ++u) deg += a[v][u];
        s.d_max = std::max(s.d_max, deg);
        std::uint64_t closed = 0, pairs = 0;
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t w = u + 1; w < n; ++w)
                if (a[v][u] && a[v][w]) {
                    ++pairs;
                    if (a[u][w]) ++closed;
                }
        s.triples += pairs;
        if (pairs) local_sum += static_cast<double>(closed) / static_cast<double>(pairs);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k)
                if (a[i][j] && a[j][k] && a[i][k]) ++s.triangles;
    s.transitivity = s.triples ? 3.0 * static_cast<double>(s.triangles) / static_cast<double>(s.triples) : 0.0;
    s.avg_local = n ? local_sum / static_cast<double>(n) : 0.0;
    return s;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    rng.shuffle(p);
    return p;
}

// Graph with node v of `g` relabelled to perm[v].
inline braingraph::StaticGraph permute_graph(const braingraph::StaticGraph& g, const std::vector<std::size_t>& perm) {
    braingraph::StaticGraph out = g;
    out.edges.clear();
    for (const Edge& e : g.edges) {
        auto a = static_cast<std::uint32_t>(perm[e.i]);
        auto b = static_cast<std::uint32_t>(perm[e.j]);
        out.edges.push_back({std::min(a, b), std::max(a, b)});
    }
    std::sort(out.edges.begin(), out.edges.end());
    for (std::size_t v = 0; v < g.n; ++v)
        for (std::size_t c = 0; c < g.features.cols(); ++c) out.features(perm[v], c) = g.features(v, c);
    return out;
}

inline braingraph::StaticGraph random_static_graph(std::size_t n, std::size_t d, double p, Rng& rng) {
    braingraph::StaticGraph g;
    g.n = n;
    g.edges = random_graph(n, p, rng);
    g.features = random_matrix(n, d, rng);
    g.label = braingraph::Label{std::int64_t{0}};
    return g;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "bg") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes;
}

// Plain logistic regression (one-vs-rest for two classes) fitted by full-batch
// gradient descent; used as the linear separability oracle.
struct LogisticOracle {
    std::vector<double> w;
    double b = 0;

    void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int iters = 500, double lr = 0.5) {
        const std::size_t d = x.front().size();
        w.assign(d, 0.0);
        b = 0;
        for (int it = 0; it < iters; ++it) {
            std::vector<double> gw(d, 0.0);
            double gb = 0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-score(x[i])));
                const double e = p - y[i];
                for (std::size_t k = 0; k < d; ++k) gw[k] += e * x[i][k];
                gb += e;
            }
            const double inv = 1.0 / static_cast<double>(x.size());
            for (std::size_t k = 0; k < d; ++k) w[k] -= lr * gw[k] * inv;
            b -= lr * gb * inv;
        }
    }
    double score(const std::vector<double>& xi) const {
        double s = b;
        for (std::size_t k = 0; k < xi.size(); ++k) s += w[k] * xi[k];
        return s;
    }
    int predict(const std::vector<double>& xi) const { return score(xi) > 0 ? 1 : 0; }
};

}  // namespace testsupport
