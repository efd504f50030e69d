#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"

namespace braingraph::kernels {

void set_num_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, n));
#else
    (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace omp {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void check_inner(std::size_t lhs, std::size_t rhs, const char* op) {
    if (lhs != rhs) {
        throw DimensionError(std::string(op) + ": inner dimensions differ (" + std::to_string(lhs) + " vs " +
                             std::to_string(rhs) + ")");
    }
}

std::uint64_t intersection_size(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    std::uint64_t count = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++count;
            ++ia;
            ++ib;
        }
    }
    return count;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul");
    Matrix out(a.rows(), b.cols());
    const std::int64_t m = static_cast<std::int64_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
#pragma omp parallel for schedule(static) if (a.rows() * inner * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        double* o = op + static_cast<std::size_t>(i) * n;
        const double* arow = ap + static_cast<std::size_t>(i) * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = bp + k * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    Matrix out(a.cols(), b.cols());
    const std::int64_t m = static_cast<std::int64_t>(a.cols());
    const std::size_t inner = a.rows();
    const std::size_t acols = a.cols();
    const std::size_t n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
#pragma omp parallel for schedule(static) if (acols * inner * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        double* o = op + static_cast<std::size_t>(i) * n;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aki = ap[k * acols + static_cast<std::size_t>(i)];
            const double* brow = bp + k * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aki * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    Matrix out(a.rows(), b.rows());
    const std::int64_t m = static_cast<std::int64_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t n = b.rows();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
#pragma omp parallel for schedule(static) if (a.rows() * inner * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = ap + static_cast<std::size_t>(i) * inner;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bp + j * inner;
            double s = 0.0;
            for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
            op[static_cast<std::size_t>(i) * n + j] = s;
        }
    }
    return out;
}

Matrix cross_product(const Matrix& z) {
    const Matrix zt = z.transposed();
    const std::size_t n = z.cols();
    const std::size_t t = z.rows();
    Matrix out(n, n);
    const double* zp = zt.data();
    double* op = out.data();
    const std::int64_t rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 4) if (n * n * t > 2 * kParallelWork)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const double* xi = zp + i * t;
        for (std::size_t j = i; j < n; ++j) {
            const double* xj = zp + j * t;
            double s = 0.0;
            for (std::size_t k = 0; k < t; ++k) s += xi[k] * xj[k];
            op[i * n + j] = s;
            op[j * n + i] = s;
        }
    }
    return out;
}

std::vector<std::uint64_t> triangles_per_node(const AdjacencyLists& adj) {
    std::vector<std::uint64_t> tri(adj.size(), 0);
    const std::int64_t n = static_cast<std::int64_t>(adj.size());
#pragma omp parallel for schedule(dynamic, 16) if (adj.size() > 256)
    for (std::int64_t vv = 0; vv < n; ++vv) {
        const auto v = static_cast<std::size_t>(vv);
        std::uint64_t twice = 0;
        for (std::uint32_t u : adj[v]) twice += intersection_size(adj[v], adj[u]);
        tri[v] = twice / 2;
    }
    return tri;
}

}  // namespace omp
}  // namespace braingraph::kernels
