// Serial reference vs OpenMP kernels. Thread count comes from OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <algorithm>

#include "braingraph/kernels.hpp"
#include "braingraph/random.hpp"

using namespace braingraph;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

kernels::AdjacencyLists random_lists(std::size_t n, double p, std::uint64_t seed) {
    Rng rng(seed);
    kernels::AdjacencyLists adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.uniform01() < p) {
                adj[i].push_back(static_cast<std::uint32_t>(j));
                adj[j].push_back(static_cast<std::uint32_t>(i));
            }
    for (auto& l : adj) std::sort(l.begin(), l.end());
    return adj;
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, 64, 2);
    for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * 64));
}

// 176 timepoints x n ROIs: the full-scan correlation shape.
template <Matrix (*F)(const Matrix&)>
void BM_cross_product(benchmark::State& state) {
    const Matrix z = random_matrix(176, static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(F(z));
}

template <std::vector<std::uint64_t> (*F)(const kernels::AdjacencyLists&)>
void BM_triangles(benchmark::State& state) {
    const auto adj = random_lists(static_cast<std::size_t>(state.range(0)), 0.1, 4);
    for (auto _ : state) benchmark::DoNotOptimize(F(adj));
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(100)->Arg(400)->Arg(1000);
BENCHMARK(BM_matmul<kernels::omp::matmul>)->Name("matmul/omp")->Arg(100)->Arg(400)->Arg(1000);
BENCHMARK(BM_cross_product<kernels::serial::cross_product>)->Name("cross_product/serial")->Arg(100)->Arg(400)->Arg(1000);
BENCHMARK(BM_cross_product<kernels::omp::cross_product>)->Name("cross_product/omp")->Arg(100)->Arg(400)->Arg(1000);
BENCHMARK(BM_triangles<kernels::serial::triangles_per_node>)->Name("triangles/serial")->Arg(100)->Arg(400)->Arg(1000);
BENCHMARK(BM_triangles<kernels::omp::triangles_per_node>)->Name("triangles/omp")->Arg(100)->Arg(400)->Arg(1000);

BENCHMARK_MAIN();
