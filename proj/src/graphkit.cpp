#include "hbg/graphkit.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "hbg/errors.hpp"

namespace hbg {

int SparseGraph::find_edge(int src, int dst) const {
    const auto& nb = neighbor_lists[static_cast<std::size_t>(src)];
    for (std::size_t r = 0; r < nb.size(); ++r)
        if (nb[r] == dst) return offsets[static_cast<std::size_t>(src)] + static_cast<int>(r);
    return -1;
}

int default_k(int node_count) { return std::max(5, node_count / 5); }

namespace {

std::vector<int> neighbours_of(const VrpInstance& instance, int i, int k_eff) {
    const int n = instance.size();
    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 0; j < n; ++j)
        if (j != i) cand.emplace_back(distance_unchecked(instance, i, j), j);
    std::partial_sort(cand.begin(), cand.begin() + k_eff, cand.end());
    cand.resize(static_cast<std::size_t>(k_eff));

    if (instance.is_cvrp() && i != instance.depot) {
        const bool has_depot =
            std::any_of(cand.begin(), cand.end(), [&](const auto& c) { return c.second == instance.depot; });
        if (!has_depot) {
            cand.back() = {distance_unchecked(instance, i, instance.depot), instance.depot};
            std::sort(cand.begin(), cand.end());
        }
    }
    std::vector<int> out;
    out.reserve(cand.size());
    for (const auto& c : cand) out.push_back(c.second);
    return out;
}

SparseGraph assemble(const VrpInstance& instance, int k_eff, std::vector<std::vector<int>> lists) {
    SparseGraph g;
    g.n = instance.size();
    g.k = k_eff;
    g.neighbor_lists = std::move(lists);
    g.offsets.reserve(static_cast<std::size_t>(g.n) + 1);
    g.offsets.push_back(0);
    for (int i = 0; i < g.n; ++i) {
        for (int j : g.neighbor_lists[static_cast<std::size_t>(i)]) {
            g.edge_src.push_back(i);
            g.edge_dst.push_back(j);
            g.edge_dist.push_back(distance_unchecked(instance, i, j));
        }
        g.offsets.push_back(static_cast<int>(g.edge_src.size()));
    }
    return g;
}

int effective_k(const VrpInstance& instance, int k) {
    if (k < 1) throw ParameterError("knn_sparsify: k must be >= 1");
    if (instance.size() < 2) throw ParameterError("knn_sparsify: need at least 2 nodes");
    return std::min(k, instance.size() - 1);
}

}  // namespace

SparseGraph knn_sparsify(const VrpInstance& instance, int k) {
    const int k_eff = effective_k(instance, k);
    const int n = instance.size();
    std::vector<std::vector<int>> lists(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 64) if (n > 256)
    for (int i = 0; i < n; ++i) lists[static_cast<std::size_t>(i)] = neighbours_of(instance, i, k_eff);
    return assemble(instance, k_eff, std::move(lists));
}

SparseGraph knn_sparsify_serial(const VrpInstance& instance, int k) {
    const int k_eff = effective_k(instance, k);
    const int n = instance.size();
    std::vector<std::vector<int>> lists(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) lists[static_cast<std::size_t>(i)] = neighbours_of(instance, i, k_eff);
    return assemble(instance, k_eff, std::move(lists));
}

FeatureSet build_features(const VrpInstance& instance, const SparseGraph& graph) {
    if (graph.n != instance.size()) throw ConsistencyError("build_features: graph and instance node counts differ");
    for (int e = 0; e < graph.edge_count(); ++e) {
        const double d = distance_unchecked(instance, graph.edge_src[static_cast<std::size_t>(e)],
                                            graph.edge_dst[static_cast<std::size_t>(e)]);
        if (d != graph.edge_dist[static_cast<std::size_t>(e)])
            throw ConsistencyError("build_features: graph was not built from this instance");
    }

    FeatureSet f;
    f.node_count = graph.n;
    f.edge_count = graph.edge_count();
    f.node_feats.reserve(static_cast<std::size_t>(graph.n) * kNodeFeatureDim);
    for (int i = 0; i < graph.n; ++i) {
        const Point& p = instance.coords[static_cast<std::size_t>(i)];
        const bool depot = instance.is_cvrp() && i == instance.depot;
        const double demand =
            instance.is_cvrp() ? static_cast<double>(instance.demand(i)) / static_cast<double>(*instance.capacity) : 0.0;
        f.node_feats.insert(f.node_feats.end(), {p.x, p.y, demand, depot ? 1.0 : 0.0});
    }
    f.edge_feats = graph.edge_dist;
    return f;
}

}  // namespace hbg
