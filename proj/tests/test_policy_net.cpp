#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hbg/errors.hpp"
#include "hbg/policy_net.hpp"
#include "hbg/rng.hpp"
#include "oracles.hpp"

using namespace hbg;

TEST_CASE("construction and finiteness") {
    const PolicyNet net(NetConfig{3, 16}, 1);
    CHECK(net.layout().layer.size() == 3);
    CHECK(net.running_stats().size() == 6);
    for (const auto& p : net.params())
        for (double v : p.data) CHECK(std::isfinite(v));
    CHECK(net.log_z() == 0.0);
    CHECK(PolicyNet(NetConfig{3, 16}, 1) == net);
    CHECK_FALSE(PolicyNet(NetConfig{3, 16}, 2) == net);
    CHECK_THROWS_AS(PolicyNet(NetConfig{0, 16}, 1), ParameterError);
}

TEST_CASE("forward shapes") {
    const auto inst = generate_cvrp(15, 2);
    const auto g = knn_sparsify(inst, default_k(inst.size()));
    const PolicyNet net(NetConfig{2, 8}, 4);
    for (bool training : {false, true}) {
        const auto out = gnn_forward(net, build_features(inst, g), g, training);
        CHECK(static_cast<int>(out.edge_logits.size()) == g.edge_count());
        CHECK(static_cast<int>(out.node_embeds.size()) == g.n * 8);
        CHECK(static_cast<int>(out.node_flow.size()) == g.n);
    }
}

TEST_CASE("zeroed message weights and head give uniform logits") {
    PolicyNet net(NetConfig{2, 8}, 3);
    for (auto& p : net.params())
        if (p.name.find(".w") != std::string::npos && p.name.rfind("layer", 0) == 0) std::fill(p.data.begin(), p.data.end(), 0.0);
    for (const char* n : {"edge_head.w1", "edge_head.w2"}) {
        auto& p = net.param(n);
        std::fill(p.data.begin(), p.data.end(), 0.0);
    }
    const auto inst = generate_cvrp(10, 3);
    const auto g = knn_sparsify(inst, 5);
    const auto out = gnn_forward(net, build_features(inst, g), g, false);
    for (double v : out.edge_logits) CHECK(v == out.edge_logits.front());
}

TEST_CASE("relabeling nodes permutes outputs") {
    const auto inst = generate_tsp(12, 9);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[2], perm[7]);
    VrpInstance moved = inst;
    for (int i = 0; i < 12; ++i) moved.coords[static_cast<std::size_t>(perm[i])] = inst.coords[static_cast<std::size_t>(i)];

    const PolicyNet net(NetConfig{2, 8}, 5);
    const auto g1 = knn_sparsify(inst, 4), g2 = knn_sparsify(moved, 4);
    for (bool training : {false, true}) {
        const auto a = gnn_forward(net, build_features(inst, g1), g1, training);
        const auto b = gnn_forward(net, build_features(moved, g2), g2, training);
        for (int e = 0; e < g1.edge_count(); ++e) {
            const int e2 = g2.find_edge(perm[g1.edge_src[e]], perm[g1.edge_dst[e]]);
            REQUIRE(e2 >= 0);
            CHECK(b.edge_logits[e2] == doctest::Approx(a.edge_logits[e]).epsilon(1e-9));
        }
        for (int i = 0; i < 12; ++i)
            for (int c = 0; c < 8; ++c)
                CHECK(b.node_embeds[perm[i] * 8 + c] == doctest::Approx(a.node_embeds[i * 8 + c]).epsilon(1e-9));
    }
}

TEST_CASE("flow value") {
    const auto inst = generate_cvrp(6, 1);
    const auto g = knn_sparsify(inst, 5);
    const PolicyNet net(NetConfig{2, 8}, 2);
    const auto out = gnn_forward(net, build_features(inst, g), g, false);
    CHECK(flow_value(net, {3}, out.node_embeds) == doctest::Approx(out.node_flow[3]).epsilon(1e-12));
    CHECK(flow_value(net, {3, 3}, out.node_embeds) == doctest::Approx(flow_value(net, {3}, out.node_embeds)).epsilon(1e-14));
    CHECK(flow_value(net, {0, 2, 5}, out.node_embeds) ==
          doctest::Approx((out.node_flow[0] + out.node_flow[2] + out.node_flow[5]) / 3).epsilon(1e-12));
    CHECK_THROWS_AS(flow_value(net, {}, out.node_embeds), ParameterError);
}

TEST_CASE("non-finite input reports the layer") {
    auto inst = generate_cvrp(6, 1);
    const auto g = knn_sparsify(inst, 5);
    auto f = build_features(inst, g);
    f.node_feats[0] = std::nan("");
    const PolicyNet net(NetConfig{2, 8}, 2);
    try {
        gnn_forward(net, f, g, false);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
}

TEST_CASE("gnn_forward gradients match finite differences") {
    const auto inst = generate_cvrp(7, 21, 15);
    const auto g = knn_sparsify(inst, default_k(inst.size()));
    const auto feats = build_features(inst, g);
    const PolicyNet net(NetConfig{2, 8}, 6);
    Rng r(4);
    std::vector<double> wl(static_cast<std::size_t>(g.edge_count())), wf(static_cast<std::size_t>(g.n));
    for (double& v : wl) v = r.uniform() - 0.5;
    for (double& v : wf) v = r.uniform() - 0.5;

    auto loss = [&](const PolicyNet& n, std::vector<double>* grad) {
        ad::Tape tape;
        auto p = bind_params(n, tape);
        auto f = gnn_forward(n, p, feats, g, true);
        ad::Var l = ad::add(ad::sum(ad::mul(f.edge_logits, tape.constant(g.edge_count(), 1, wl))),
                            ad::sum(ad::mul(f.node_flow, tape.constant(g.n, 1, wf))));
        if (grad) {
            tape.backward(l);
            for (const auto& t : tape.param_grads(n.param_count())) grad->insert(grad->end(), t.begin(), t.end());
        }
        return l.item();
    };
    std::vector<double> analytic;
    loss(net, &analytic);
    const auto x0 = flatten(net);
    std::vector<std::size_t> coords;
    Rng pick(8);
    for (int i = 0; i < 200; ++i) coords.push_back(static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(x0.size()) - 1)));
    PolicyNet probe = net;
    const auto res = oracle::finite_diff(
        [&](const std::vector<double>& x) {
            assign_flat(probe, x);
            return loss(probe, nullptr);
        },
        x0, analytic, coords);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("JSON round trip and shape errors") {
    PolicyNet net(NetConfig{2, 8}, 7);
    net.update_running_stats(std::vector<ad::NormStats>(4, {std::vector<double>(8, 0.5), std::vector<double>(8, 2.0)}));
    const auto j = net_to_json(net);
    CHECK(net_from_json(j) == net);
    CHECK(net_to_json(net_from_json(j)).dump() == j.dump());

    auto bad = j;
    bad["params"][2]["shape"] = {2, 8};
    try {
        net_from_json(bad);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("edge_in.w") != std::string::npos);
    }
    auto wrong_dims = net_to_json(PolicyNet(NetConfig{2, 4}, 1));
    wrong_dims["config"] = j["config"];
    CHECK_THROWS_AS(net_from_json(wrong_dims), ShapeError);
}
