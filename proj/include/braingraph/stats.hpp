#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "braingraph/graph.hpp"
#include "braingraph/kernels.hpp"

namespace braingraph {

struct GraphStats {
    std::size_t n = 0;
    std::size_t m_undirected = 0;
    std::size_t m_directed_equiv = 0;  // 2 * m
    std::size_t d_max = 0;
    double d_avg_undirected = 0.0;  // 2m / n
    double d_avg_table = 0.0;       // m_directed_equiv / n, kept separately for audit
    double k_avg_local = 0.0;       // mean local clustering (degree < 2 counts as 0)
    double transitivity = 0.0;      // 3 * triangles / connected triples
    std::uint64_t triangles = 0;
    std::uint64_t connected_triples = 0;
};

// Sorted neighbour lists of an undirected edge list.
kernels::AdjacencyLists adjacency_lists(std::size_t n, const std::vector<Edge>& edges);

GraphStats compute_stats(const StaticGraph& g);

struct DatasetStats {
    std::size_t graph_count = 0;  // |G|
    double n_avg = 0.0;
    double m_avg = 0.0;
    double m_directed_avg = 0.0;
    double d_max_avg = 0.0;
    std::size_t d_max_overall = 0;
    double d_avg = 0.0;
    double k_avg_local = 0.0;
    double transitivity = 0.0;
    std::size_t feature_dim = 0;
};

// Arithmetic means over the graphs; throws ValidationError on an empty list.
DatasetStats aggregate_stats(const std::vector<StaticGraph>& graphs);
DatasetStats aggregate_stats(const std::vector<GraphStats>& per_graph, std::size_t feature_dim);

std::string stats_to_json(const DatasetStats& s, const std::string& dataset_name);
// Aligned columns: Dataset |G| |N|avg |E|avg d_max d_avg K_avg transitivity NodeFeat
std::string stats_to_table(const std::vector<std::pair<std::string, DatasetStats>>& rows);

}  // namespace braingraph
