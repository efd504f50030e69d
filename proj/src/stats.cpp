#include "braingraph/stats.hpp"

#include <algorithm>
#include <cstdio>

#include "braingraph/error.hpp"
#include "json.hpp"

namespace braingraph {

kernels::AdjacencyLists adjacency_lists(std::size_t n, const std::vector<Edge>& edges) {
    kernels::AdjacencyLists adj(n);
    for (const Edge& e : edges) {
        adj[e.i].push_back(e.j);
        adj[e.j].push_back(e.i);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
    return adj;
}

GraphStats compute_stats(const StaticGraph& g) {
    GraphStats s;
    s.n = g.n;
    s.m_undirected = g.edges.size();
    s.m_directed_equiv = 2 * s.m_undirected;
    if (g.n == 0) return s;

    const auto adj = adjacency_lists(g.n, g.edges);
    const auto tri = kernels::triangles_per_node(adj);
    double local_sum = 0.0;
    std::uint64_t tri_sum = 0;
    for (std::size_t v = 0; v < g.n; ++v) {
        const std::uint64_t deg = adj[v].size();
        s.d_max = std::max<std::size_t>(s.d_max, deg);
        const std::uint64_t pairs = deg * (deg - (deg > 0 ? 1 : 0)) / 2;
        s.connected_triples += pairs;
        tri_sum += tri[v];
        if (pairs > 0) local_sum += static_cast<double>(tri[v]) / static_cast<double>(pairs);
    }
    s.triangles = tri_sum / 3;
    s.k_avg_local = local_sum / static_cast<double>(g.n);
    s.transitivity = s.connected_triples == 0
                         ? 0.0
                         : 3.0 * static_cast<double>(s.triangles) / static_cast<double>(s.connected_triples);
    s.d_avg_undirected = 2.0 * static_cast<double>(s.m_undirected) / static_cast<double>(g.n);
    s.d_avg_table = static_cast<double>(s.m_directed_equiv) / static_cast<double>(g.n);
    return s;
}

DatasetStats aggregate_stats(const std::vector<GraphStats>& per_graph, std::size_t feature_dim) {
    if (per_graph.empty()) throw ValidationError("cannot aggregate statistics over an empty dataset");
    DatasetStats a;
    a.graph_count = per_graph.size();
    a.feature_dim = feature_dim;
    for (const GraphStats& s : per_graph) {
        a.n_avg += static_cast<double>(s.n);
        a.m_avg += static_cast<double>(s.m_undirected);
        a.m_directed_avg += static_cast<double>(s.m_directed_equiv);
        a.d_max_avg += static_cast<double>(s.d_max);
        a.d_max_overall = std::max(a.d_max_overall, s.d_max);
        a.d_avg += s.d_avg_undirected;
        a.k_avg_local += s.k_avg_local;
        a.transitivity += s.transitivity;
    }
    const double count = static_cast<double>(per_graph.size());
    a.n_avg /= count;
    a.m_avg /= count;
    a.m_directed_avg /= count;
    a.d_max_avg /= count;
    a.d_avg /= count;
    a.k_avg_local /= count;
    a.transitivity /= count;
    return a;
}

DatasetStats aggregate_stats(const std::vector<StaticGraph>& graphs) {
    if (graphs.empty()) throw ValidationError("cannot aggregate statistics over an empty dataset");
    std::vector<GraphStats> per(graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) per[i] = compute_stats(graphs[i]);
    return aggregate_stats(per, graphs.front().features.cols());
}

std::string stats_to_json(const DatasetStats& s, const std::string& dataset_name) {
    const nlohmann::json j{
        {"dataset", dataset_name},
        {"graphs", s.graph_count},
        {"nodes_avg", s.n_avg},
        {"edges_avg", s.m_avg},
        {"edges_directed_equiv_avg", s.m_directed_avg},
        {"d_max", s.d_max_overall},
        {"d_max_avg", s.d_max_avg},
        {"d_avg", s.d_avg},
        {"k_avg_local", s.k_avg_local},
        {"transitivity", s.transitivity},
        {"node_feature_dim", s.feature_dim},
    };
    return j.dump(2);
}

std::string stats_to_table(const std::vector<std::pair<std::string, DatasetStats>>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %8s %8s %12s %14s %6s %9s %7s %7s %9s\n", "Dataset", "|G|", "|N|avg",
                  "|E|avg", "|E|avg(2m)", "d_max", "d_avg", "K_avg", "trans", "NodeFeat");
    out += buf;
    for (const auto& [name, s] : rows) {
        std::snprintf(buf, sizeof buf, "%-20s %8zu %8.2f %12.2f %14.2f %6zu %9.3f %7.3f %7.3f %9zu\n", name.c_str(),
                      s.graph_count, s.n_avg, s.m_avg, s.m_directed_avg, s.d_max_overall, s.d_avg, s.k_avg_local,
                      s.transitivity, s.feature_dim);
        out += buf;
    }
    return out;
}

}  // namespace braingraph
