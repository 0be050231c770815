#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <set>

#include "hbg/errors.hpp"
#include "hbg/graphkit.hpp"

using namespace hbg;

TEST_CASE("default k") {
    CHECK(default_k(10) == 5);
    CHECK(default_k(101) == 20);
    CHECK(default_k(1000) == 200);
}

TEST_CASE("k-NN structure invariants") {
    for (int n : {5, 20, 100}) {
        const auto inst = generate_cvrp(n, 3);
        const int k = default_k(inst.size());
        const auto g = knn_sparsify(inst, k);
        CHECK(g.n == inst.size());
        CHECK(g.edge_count() == g.n * std::min(k, g.n - 1));
        for (int i = 0; i < g.n; ++i) {
            const auto& nb = g.neighbors(i);
            CHECK(static_cast<int>(nb.size()) == std::min(k, g.n - 1));
            CHECK(std::set<int>(nb.begin(), nb.end()).size() == nb.size());
            CHECK(std::find(nb.begin(), nb.end(), i) == nb.end());
            for (std::size_t p = 1; p < nb.size(); ++p) {
                const double d0 = distance(inst, i, nb[p - 1]), d1 = distance(inst, i, nb[p]);
                CHECK((d0 < d1 || (d0 == d1 && nb[p - 1] < nb[p])));
            }
            if (i != inst.depot) CHECK(std::find(nb.begin(), nb.end(), inst.depot) != nb.end());
            for (int e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
                CHECK(g.edge_src[e] == i);
                CHECK(g.find_edge(i, g.edge_dst[e]) == e);
                CHECK(g.edge_dist[e] == distance(inst, i, g.edge_dst[e]));
            }
        }
    }
}

TEST_CASE("k at least n-1 gives the complete graph") {
    const auto inst = generate_tsp(5, 1);
    const auto g = knn_sparsify(inst, 10);
    for (int i = 0; i < 5; ++i) CHECK(g.neighbors(i).size() == 4);
}

TEST_CASE("ties break by lower index") {
    VrpInstance line;
    line.kind = ProblemKind::TSP;
    line.coords = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {5, 5}};
    const auto g = knn_sparsify(line, 3);
    CHECK(g.neighbors(0) == std::vector<int>{1, 2, 3});
}

TEST_CASE("depot replaces the farthest neighbour for CVRP customers") {
    VrpInstance inst;
    inst.kind = ProblemKind::CVRP;
    inst.capacity = 10;
    inst.coords = {{10, 10}, {0, 0}, {0.1, 0}, {0.2, 0}, {0.3, 0}};
    inst.demands = {0, 1, 1, 1, 1};
    const auto g = knn_sparsify(inst, 2);
    CHECK(g.neighbors(1) == std::vector<int>{2, 0});
}

TEST_CASE("parallel and serial sparsification agree") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    const auto inst = generate_cvrp(600, 8);
    CHECK(knn_sparsify(inst, 30) == knn_sparsify_serial(inst, 30));
    omp_set_num_threads(saved);
}

TEST_CASE("features") {
    VrpInstance inst;
    inst.kind = ProblemKind::CVRP;
    inst.capacity = 50;
    inst.coords = {{0.5, 0.5}, {0, 0}, {1, 0}};
    inst.demands = {0, 25, 5};
    const auto g = knn_sparsify(inst, 2);
    const auto f = build_features(inst, g);
    CHECK(f.node_feats[0] == 0.5);
    CHECK(f.node_feats[1] == 0.5);
    CHECK(f.node_feats[2] == 0.0);
    CHECK(f.node_feats[3] == 1.0);
    CHECK(f.node_feats[kNodeFeatureDim + 2] == 0.5);
    CHECK(f.node_feats[kNodeFeatureDim + 3] == 0.0);
    const int e = g.find_edge(1, 2);
    CHECK(f.edge_feats[static_cast<std::size_t>(e)] == 1.0);

    auto other = knn_sparsify(generate_cvrp(4, 1), 2);
    CHECK_THROWS_AS(build_features(inst, other), ConsistencyError);
}
