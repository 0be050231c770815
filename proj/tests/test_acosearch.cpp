#include <doctest.h>

#include <cmath>
#include <map>

#include "hbg/acosearch.hpp"
#include "hbg/errors.hpp"
#include "oracles.hpp"

using namespace hbg;

TEST_CASE("pheromones from logits") {
    const auto inst = generate_cvrp(12, 3);
    const auto g = knn_sparsify(inst, 5);
    PolicyOutput out;
    out.edge_logits.assign(static_cast<std::size_t>(g.edge_count()), 0.7);
    AcoParams p;
    p.tau_max = 1.0;
    auto map = heuristic_to_pheromone(out, g, p);
    for (int i = 0; i < g.n; ++i)
        for (int e = g.offsets[i]; e < g.offsets[i + 1]; ++e) CHECK(map.tau[e] == doctest::Approx(1.0 / 5.0));

    Rng r(2);
    for (double& v : out.edge_logits) v = 6.0 * (r.uniform() - 0.5);
    map = heuristic_to_pheromone(out, g, p);
    for (double t : map.tau) {
        CHECK(t >= p.tau_min);
        CHECK(t <= p.tau_max);
    }
    auto raised = out;
    raised.edge_logits[7] += 1.0;
    CHECK(heuristic_to_pheromone(raised, g, p).tau[7] >= map.tau[7]);
    CHECK(map.eta[3] == doctest::Approx(1.0 / g.edge_dist[3]));
}

TEST_CASE("ant tours are feasible") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto inst = generate_cvrp(20, s);
        const auto g = knn_sparsify(inst, default_k(inst.size()));
        for (const auto& t : ant_construct(uniform_pheromone(g, 1.0), inst, g, 100, Rng(s)))
            CHECK(oracle::feasibility_problem(inst, t.nodes) == "");
    }
    const auto tsp = generate_tsp(15, 1);
    const auto gt = knn_sparsify(tsp, 5);
    for (const auto& t : ant_construct(uniform_pheromone(gt, 1.0), tsp, gt, 20, Rng(1)))
        CHECK(oracle::feasibility_problem(tsp, t.nodes) == "");
}

TEST_CASE("neutral exponents give uniform choices") {
    VrpInstance tri;
    tri.kind = ProblemKind::TSP;
    tri.coords = {{0, 0}, {1, 0}, {0, 3}};
    const auto g = knn_sparsify(tri, 2);
    AcoParams p;
    p.alpha = 0.0;
    p.beta_h = 0.0;
    const auto map = uniform_pheromone(g, 0.5, p);
    int first_is_1 = 0;
    const int n = 4000;
    int from0 = 0;
    for (const auto& t : ant_construct(map, tri, g, n, Rng(3))) {
        if (t.nodes[0] != 0) continue;
        ++from0;
        first_is_1 += t.nodes[1] == 1;
    }
    CHECK(std::abs(static_cast<double>(first_is_1) / from0 - 0.5) < 0.05);
}

TEST_CASE("strong heuristic exponent follows nearest neighbours") {
    const auto inst = generate_tsp(10, 4);
    const auto g = knn_sparsify(inst, 9);
    AcoParams p;
    p.alpha = 0.0;
    p.beta_h = 200.0;
    const auto t = ant_construct(uniform_pheromone(g, 1.0, p), inst, g, 1, Rng(1)).front();
    std::vector<bool> seen(10, false);
    seen[t.nodes[0]] = true;
    for (std::size_t i = 1; i < t.nodes.size(); ++i) {
        int best = -1;
        for (int c = 0; c < 10; ++c)
            if (!seen[c] && (best < 0 || distance(inst, t.nodes[i - 1], c) < distance(inst, t.nodes[i - 1], best))) best = c;
        CHECK(t.nodes[i] == best);
        seen[t.nodes[i]] = true;
    }
}

TEST_CASE("2-opt removes a crossing") {
    VrpInstance sq;
    sq.kind = ProblemKind::TSP;
    sq.coords = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
    const auto crossed = make_trajectory(sq, {0, 2, 1, 3});
    const auto fixed = local_search(crossed, sq, LocalSearchMode::two_opt);
    CHECK(fixed.length < crossed.length);
    CHECK(fixed.length == doctest::Approx(4.0));
    CHECK(fixed.nodes.front() == 0);

    const auto good = make_trajectory(sq, {0, 1, 2, 3});
    CHECK(local_search(good, sq, LocalSearchMode::two_opt).nodes == good.nodes);
}

TEST_CASE("local search never lengthens and stays feasible") {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto inst = s % 2 ? generate_cvrp(15, s) : generate_tsp(12, s);
        const auto g = knn_sparsify(inst, default_k(inst.size()));
        const auto t = ant_construct(uniform_pheromone(g, 1.0), inst, g, 1, Rng(s)).front();
        for (auto mode : {LocalSearchMode::two_opt, LocalSearchMode::two_opt_plus_relocate}) {
            const auto r = local_search(t, inst, mode);
            CHECK(r.length <= t.length + 1e-12);
            CHECK(oracle::feasibility_problem(inst, r.nodes) == "");
            CHECK(r.length == doctest::Approx(oracle::path_length(inst, inst.is_cvrp() ? r.nodes : [&] {
                                  auto c = r.nodes;
                                  c.push_back(c.front());
                                  return c;
                              }())).epsilon(1e-12));
        }
    }
    const auto inst = generate_cvrp(5, 1);
    Trajectory broken = make_trajectory(inst, {0, 1, 2, 0});
    CHECK_THROWS_AS(local_search(broken, inst, LocalSearchMode::two_opt), InvariantError);
}

TEST_CASE("relocate merges routes when it pays") {
    VrpInstance inst;
    inst.kind = ProblemKind::CVRP;
    inst.capacity = 10;
    inst.coords = {{0, 0}, {1, 0}, {1.1, 0}};
    inst.demands = {0, 1, 1};
    const auto split = make_trajectory(inst, {0, 1, 0, 2, 0});
    const auto r = local_search(split, inst, LocalSearchMode::two_opt_plus_relocate);
    CHECK(r.nodes.size() == 4);
    CHECK(r.length < split.length);
    CHECK(local_search(split, inst, LocalSearchMode::two_opt).nodes == split.nodes);
}

TEST_CASE("2-opt from nearest neighbour is near the brute-force optimum on n=7 TSP") {
    int close = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto inst = generate_tsp(7, 1000 + s);
        const auto t = local_search(nearest_neighbor_tour(inst), inst, LocalSearchMode::two_opt);
        const double opt = oracle::tsp_optimum(inst);
        CHECK(t.length >= opt - 1e-12);
        close += t.length <= 1.05 * opt;
    }
    CHECK(close >= 90);
}

TEST_CASE("pheromone update") {
    const auto inst = generate_cvrp(10, 2);
    const auto g = knn_sparsify(inst, 5);
    AcoParams p;
    p.rho = 1.0;
    const auto map = uniform_pheromone(g, 2.0, p);
    const auto tours = ant_construct(map, inst, g, 3, Rng(1));
    const auto up = pheromone_update(map, g, tours, 1);
    std::map<int, bool> used;
    std::size_t best = 0;
    for (std::size_t i = 1; i < tours.size(); ++i)
        if (tours[i].length < tours[best].length) best = i;
    for (const auto& r : tours[best].records) used[g.find_edge(r.from_node, r.to_node)] = true;
    for (int e = 0; e < g.edge_count(); ++e) {
        if (!used.count(e)) CHECK(up.tau[e] == p.tau_min);
        CHECK(up.tau[e] >= p.tau_min);
        CHECK(up.tau[e] <= p.tau_max);
    }

    AcoParams keep;
    keep.rho = 0.0;
    const auto m2 = uniform_pheromone(g, 2.0, keep);
    CHECK(pheromone_update(m2, g, {}, 5).tau == m2.tau);
    CHECK_THROWS_AS(pheromone_update(m2, g, {}, 0), ParameterError);
}

TEST_CASE("aco_solve") {
    const auto inst = generate_cvrp(20, 5);
    const auto g = knn_sparsify(inst, default_k(inst.size()));
    const PolicyNet net(NetConfig{2, 8}, 1);
    CHECK_THROWS_AS(aco_solve(net, inst, g, 0, 5, Rng(1)), ParameterError);
    AcoOptions o;
    o.local_search = true;
    const auto res = aco_solve(net, inst, g, 50, 10, Rng(1), o);
    REQUIRE(res.history.size() == 50);
    for (std::size_t i = 1; i < res.history.size(); ++i) CHECK(res.history[i] <= res.history[i - 1]);
    CHECK(res.best.length == res.history.back());
    CHECK(oracle::feasibility_problem(inst, res.best.nodes) == "");
    CHECK(aco_solve(net, inst, g, 50, 10, Rng(1), o).history == res.history);

    AcoOptions fixed;
    fixed.update_pheromones = false;
    fixed.depot_guided = true;
    const auto r2 = aco_solve(uniform_pheromone(g, 1.0), inst, g, 5, 10, Rng(2), fixed);
    CHECK(r2.history.size() == 5);
}
