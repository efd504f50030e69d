#pragma once

#include <cstdint>
#include <vector>

#include "braingraph/matrix.hpp"

// Dense and graph kernels behind the pipeline. Each kernel has a plain serial
// reference (kernels::serial) and an OpenMP version (kernels::omp) that
// performs the same floating-point operations in the same per-element order,
// so the two agree bit for bit at any thread count. The unqualified entry
// points dispatch to the OpenMP versions.

namespace braingraph::kernels {

using AdjacencyLists = std::vector<std::vector<std::uint32_t>>;

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);      // A * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);   // A^T * B
Matrix matmul_nt(const Matrix& a, const Matrix& b);   // A * B^T
// Z^T Z over the rows of Z (columns are variables). Exactly symmetric.
Matrix cross_product(const Matrix& z);
// Number of triangles through each node; neighbour lists must be sorted.
std::vector<std::uint64_t> triangles_per_node(const AdjacencyLists& adj);
}  // namespace serial

namespace omp {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix cross_product(const Matrix& z);
std::vector<std::uint64_t> triangles_per_node(const AdjacencyLists& adj);
}  // namespace omp

inline Matrix matmul(const Matrix& a, const Matrix& b) { return omp::matmul(a, b); }
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) { return omp::matmul_tn(a, b); }
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) { return omp::matmul_nt(a, b); }
inline Matrix cross_product(const Matrix& z) { return omp::cross_product(z); }
inline std::vector<std::uint64_t> triangles_per_node(const AdjacencyLists& adj) {
    return omp::triangles_per_node(adj);
}

// Thread control; a no-op when built without OpenMP.
void set_num_threads(int n);
int max_threads();

}  // namespace braingraph::kernels
