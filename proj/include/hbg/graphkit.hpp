#pragma once

#include <vector>

#include "hbg/instances.hpp"

namespace hbg {

/// Directed k-nearest-neighbour graph; node i owns edges [offsets[i], offsets[i+1]).
struct SparseGraph {
    int n = 0;
    int k = 0;  // neighbours per node = min(k_requested, n - 1)
    std::vector<std::vector<int>> neighbor_lists;
    std::vector<int> edge_src;
    std::vector<int> edge_dst;
    std::vector<double> edge_dist;
    std::vector<int> offsets;

    int edge_count() const { return static_cast<int>(edge_src.size()); }
    const std::vector<int>& neighbors(int node) const { return neighbor_lists[static_cast<std::size_t>(node)]; }

    /// Edge id of (src -> dst), or -1 when dst is not a neighbour of src.
    int find_edge(int src, int dst) const;

    bool operator==(const SparseGraph&) const = default;
};

/// max(5, |V| / 5)
int default_k(int node_count);

/// Neighbour lists sorted by (distance, index); CVRP customers always list the depot.
SparseGraph knn_sparsify(const VrpInstance& instance, int k);
SparseGraph knn_sparsify_serial(const VrpInstance& instance, int k);

inline constexpr int kNodeFeatureDim = 4;  // x, y, demand / capacity, is_depot
inline constexpr int kEdgeFeatureDim = 1;  // euclidean distance

struct FeatureSet {
    int node_count = 0;
    int edge_count = 0;
    std::vector<double> node_feats;  // node_count x kNodeFeatureDim
    std::vector<double> edge_feats;  // edge_count x kEdgeFeatureDim
};

FeatureSet build_features(const VrpInstance& instance, const SparseGraph& graph);

}  // namespace hbg
