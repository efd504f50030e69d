#include <algorithm>

#include "braingraph/error.hpp"
#include "braingraph/kernels.hpp"

namespace braingraph::kernels::serial {

namespace {

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
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    Matrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.cols(); ++i) {
        double* o = out.data() + i * n;
        for (std::size_t k = 0; k < a.rows(); ++k) {
            const double aki = a(k, i);
            const double* brow = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += aki * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data() + i * a.cols();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.data() + j * b.cols();
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

Matrix cross_product(const Matrix& z) {
    const Matrix zt = z.transposed();
    const std::size_t n = z.cols();
    const std::size_t t = z.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = zt.data() + i * t;
        for (std::size_t j = i; j < n; ++j) {
            const double* xj = zt.data() + j * t;
            double s = 0.0;
            for (std::size_t k = 0; k < t; ++k) s += xi[k] * xj[k];
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

std::vector<std::uint64_t> triangles_per_node(const AdjacencyLists& adj) {
    std::vector<std::uint64_t> tri(adj.size(), 0);
    for (std::size_t v = 0; v < adj.size(); ++v) {
        std::uint64_t twice = 0;
        for (std::uint32_t u : adj[v]) twice += intersection_size(adj[v], adj[u]);
        tri[v] = twice / 2;
    }
    return tri;
}

}  // namespace braingraph::kernels::serial
