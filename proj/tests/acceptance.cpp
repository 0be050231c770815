// One PASS/FAIL line per acceptance criterion; exit status is nonzero if any fail.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hbg/comborder.hpp"
#include "hbg/workbench.hpp"
#include "oracles.hpp"

using namespace hbg;

namespace {

int failures = 0;

void criterion(int id, const std::string& title, const std::function<bool(std::ostream&)>& body) {
    std::ostringstream detail;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!ok) ++failures;
    std::printf("[%s] %2d %s (%.1fs) %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), secs, detail.str().c_str());
    std::fflush(stdout);
}

BigInt factorial(int n) {
    BigInt f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

std::string run(const std::string& cmd) {
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return out;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) out += buf;
    pclose(p);
    return out;
}

// Random complete solution: a shuffled order, cut into capacity-feasible routes.
std::vector<int> random_solution(const VrpInstance& inst, Rng& rng) {
    std::vector<int> order;
    for (int v = 0; v < inst.size(); ++v)
        if (!inst.is_cvrp() || v != inst.depot) order.push_back(v);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    if (!inst.is_cvrp()) return order;
    std::vector<int> nodes{inst.depot};
    int load = 0;
    for (int v : order) {
        if (load + inst.demand(v) > *inst.capacity) {
            nodes.push_back(inst.depot);
            load = 0;
        }
        nodes.push_back(v);
        load += inst.demand(v);
    }
    nodes.push_back(inst.depot);
    return nodes;
}

}  // namespace

int main() {
    const Rng root(20261015);

    criterion(1, "destruction counts and probability mass", [&](std::ostream& d) {
        std::vector<std::pair<int, int>> cases;
        for (int a = 0; a <= 3; ++a)
            for (int j = 0; j <= 3; ++j)
                if (a + j > 0) cases.emplace_back(a, j);
        cases.emplace_back(4, 2);
        for (auto [a, j] : cases) {
            const BigInt expected = factorial(a + j) * (BigInt(1) << a);
            const auto seqs = enumerate_destructions(a, j);
            Rational mass = 0;
            for (const auto& s : seqs) mass += s.probability;
            if (BigInt(seqs.size()) != expected || count_recurrence(a, j) != expected || count_closed(a, j) != expected ||
                mass != 1) {
                d << "mismatch at a=" << a << " j=" << j;
                return false;
            }
        }
        d << cases.size() << " (a,j) pairs, (4,2) -> " << enumerate_destructions(4, 2).size();
        return true;
    });

    criterion(2, "backward probability anchors", [&](std::ostream& d) {
        const double pd = backward_step_prob(2, 1, true);
        const double pc = backward_step_prob(2, 1, false);
        const double lp = backward_traj_logprob(2, 1);
        d << "P_b(depot)=" << pd << " P_b(customer)=" << pc << " log P_B=" << lp;
        return pd == 1.0 / 5.0 && pc == 1.0 && std::abs(lp + std::log(24.0)) < 1e-12;
    });

    criterion(3, "forward factorization on 100 trajectories", [&](std::ostream& d) {
        const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 3).next_u64());
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{}, 31);
        const auto out = gnn_forward(net, build_features(inst, graph), graph, false);
        const auto score = policy_scorer(net, out, inst);
        const auto trajs = sample_trajectories(inst, graph, score, 100, root.stream(StreamPurpose::trajectory, 3));
        double worst = 0.0;
        for (const auto& t : trajs) {
            // Independent P_F: masked softmax over every feasible successor, recomputed from scratch.
            double sum_pf = 0.0, log_pf = 0.0;
            for (const auto& r : t.records) sum_pf += r.log_pf;
            const auto steps = replay(inst, graph, t);
            for (std::size_t s = 0; s < steps.size(); ++s) {
                std::vector<double> z;
                for (const auto& c : steps[s].candidates) z.push_back(score(t.records[s].from_node, c));
                double p = 0.0;
                for (double v : z) p += std::exp(v);
                log_pf += std::log(std::exp(z[static_cast<std::size_t>(steps[s].chosen)]) / p);
            }
            worst = std::max(worst, std::abs(sum_pf - log_pf));
        }
        d << "max |sum log_pf - log P_F| = " << worst;
        return trajs.size() == 100 && worst < 1e-9;
    });

    criterion(4, "finite-difference gradients (TB, DB-step, DB-trajectory, hybrid)", [&](std::ostream& d) {
        const auto inst = generate_cvrp(8, root.stream(StreamPurpose::check, 4).next_u64(), 15);
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{2, 8}, 41);
        auto trajs = sample_trajectories(net, inst, graph, 4, root.stream(StreamPurpose::trajectory, 4));
        std::vector<double> lens;
        for (const auto& t : trajs) lens.push_back(t.length);
        apply_energies(trajs, energy_table(trajs));
        const auto log_r = log_reward_transform(lens, 20.0);
        bool ok = true;
        for (GradLoss g : {GradLoss::tb, GradLoss::db_step, GradLoss::db_trajectory, GradLoss::hybrid}) {
            const auto r = gradient_check(net, inst, graph, trajs, log_r, g, 300, root.stream(StreamPurpose::check, 44));
            d << to_string(g) << "=" << r.max_rel_error << "/" << r.checked << " ";
            ok = ok && r.checked > 0 && r.max_rel_error < 1e-4;
        }
        return ok;
    });

    criterion(5, "feasibility sweep (10000 sampled, 1000 depot-guided, 1000 ACO)", [&](std::ostream& d) {
        const PolicyNet net(NetConfig{}, 51);
        const int n_inst = 10;
        int total = 0, bad = 0;
        std::string first;
        auto check = [&](const VrpInstance& inst, const Trajectory& t) {
            ++total;
            const auto p = oracle::feasibility_problem(inst, t.nodes);
            if (!p.empty()) {
                ++bad;
                if (first.empty()) first = p;
            }
        };
        for (int i = 0; i < n_inst; ++i) {
            const auto inst = generate_cvrp(20, root.stream(StreamPurpose::instance, 500 + static_cast<std::uint64_t>(i)).next_u64());
            const auto graph = knn_sparsify(inst, default_k(inst.size()));
            const Rng r = root.stream(StreamPurpose::check, 500 + static_cast<std::uint64_t>(i));
            for (const auto& t : sample_trajectories(net, inst, graph, 1000, r.stream(StreamPurpose::trajectory, 0)))
                check(inst, t);
            for (int g = 0; g < 100; ++g)
                check(inst, depot_guided_decode(net, inst, graph, r.stream(StreamPurpose::ant, static_cast<std::uint64_t>(g))));
            const auto out = gnn_forward(net, build_features(inst, graph), graph, false);
            for (const auto& t : ant_construct(heuristic_to_pheromone(out, graph), inst, graph, 100, r.stream(StreamPurpose::epoch, 0)))
                check(inst, t);
        }
        d << bad << " infeasible of " << total << (first.empty() ? "" : " first: " + first);
        return total == 12000 && bad == 0;
    });

    criterion(6, "energy centering", [&](std::ostream& d) {
        const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 6).next_u64());
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{}, 61);
        double worst = 0.0;
        for (int h : {2, 5, 20}) {
            const auto table = energy_table(sample_trajectories(net, inst, graph, h, root.stream(StreamPurpose::trajectory, 6)));
            if (table.h != h) return false;
            for (int t = 0; t < table.steps; ++t) {
                double s = 0.0;
                for (int i = 0; i < table.h; ++i) s += table.at(i, t);
                worst = std::max(worst, std::abs(s));
            }
        }
        const auto one = sample_trajectories(net, inst, graph, 1, root.stream(StreamPurpose::trajectory, 7)).front();
        const auto same = energy_table(std::vector<Trajectory>(5, one));
        double nonzero = 0.0;
        for (const auto& row : same.values)
            for (double v : row) nonzero = std::max(nonzero, std::abs(v));
        d << "max |column sum| = " << worst << ", identical batch max |E| = " << nonzero;
        return worst < 1e-9 && nonzero == 0.0;
    });

    criterion(7, "training smoke: greedy length falls over 30 epochs", [&](std::ostream& d) {
        TrainConfig c;
        c.seed = 1;
        c.n_nodes = 20;
        c.instances_per_epoch = 8;
        c.h = 20;
        c.epochs = 30;
        c.lambda_start = c.lambda_end = 1.0;
        const auto res = train(c);
        const auto& ep = res.metrics.epochs;
        bool finite = true;
        for (const auto& e : ep)
            finite = finite && std::isfinite(e.tb) && std::isfinite(e.db) && std::isfinite(e.hybrid);
        const double first = ep.front().mean_len_greedy, last = ep.back().mean_len_greedy;
        d << "seed 1: untrained " << res.metrics.initial_greedy << ", epoch 0 " << first << ", epoch 29 " << last;
        return ep.size() == 30 && finite && last < first && last < res.metrics.initial_greedy;
    });

    criterion(8, "gap arithmetic anchor", [&](std::ostream& d) {
        const auto rep = evaluate({{"anchor", 200, 31.26, 0.0, {}}}, BaselineSolutions{"anchor", {{"anchor", 28.04}}},
                                  "check", 0, "");
        const double g = rep.rows.front().gap_pct;
        d << "gap = " << g;
        return std::abs(g - 11.48) <= 0.01;
    });

    criterion(9, "ablation plumbing", [&](std::ostream& d) {
        const auto vars = balance_variants();
        bool ok = vars.size() == 3 && vars[0].label == "DB" && vars[0].tb_weight == 0.0 && vars[0].lambda == 1.0 &&
                  vars[1].label == "TB" && vars[1].tb_weight == 1.0 && vars[1].lambda == 0.0 &&
                  vars[2].label == "HB" && vars[2].tb_weight == 1.0 && vars[2].lambda == 1.0;
        TrainConfig c;
        c.n_nodes = 10;
        c.epochs = 1;
        c.instances_per_epoch = 2;
        c.h = 4;
        c.net = NetConfig{2, 8};
        c.validation_instances = 1;
        const auto data = generate_dataset(ProblemKind::CVRP, 10, 3, 9);
        const auto base = builtin_baseline(data);
        std::vector<std::string> methods;
        for (const auto& s : ablate_balance(c, data, EvalOptions{}, base).report.summary()) methods.push_back(s.method);
        ok = ok && methods == std::vector<std::string>{"DB", "HB", "TB"};

        EvalOptions o;
        o.samples = 4;
        const PolicyNet net(NetConfig{2, 8}, 91);
        const auto dec = ablate_decoding(net, data, {1, 2, 3}, o, base);
        methods.clear();
        for (const auto& s : dec.report.summary()) methods.push_back(s.method);
        const auto var = cross_seed_variance(dec.report);
        d << "balance rows DB/HB/TB, decode variance DG+CG=" << var.at("DG+CG") << " DS+CS=" << var.at("DS+CS");
        return ok && methods == std::vector<std::string>{"DG+CG", "DG+CS", "DS+CG", "DS+CS"} && var.at("DG+CG") == 0.0;
    });

    criterion(10, "local search contracts", [&](std::ostream& d) {
        int worse = 0, infeasible = 0;
        for (int i = 0; i < 1000; ++i) {
            Rng r = root.stream(StreamPurpose::check, 10000 + static_cast<std::uint64_t>(i));
            const bool tsp = i % 2 == 1;
            const int n = 5 + static_cast<int>(r.uniform_int(0, 25));
            const auto inst = tsp ? generate_tsp(n, r.next_u64()) : generate_cvrp(n, r.next_u64(), 20);
            const auto t = make_trajectory(inst, random_solution(inst, r));
            for (auto mode : {LocalSearchMode::two_opt, LocalSearchMode::two_opt_plus_relocate}) {
                const auto out = local_search(t, inst, mode);
                worse += out.length > t.length + 1e-12;
                infeasible += !oracle::feasibility_problem(inst, out.nodes).empty();
            }
        }
        int within = 0;
        for (int i = 0; i < 100; ++i) {
            const auto inst = generate_tsp(7, root.stream(StreamPurpose::instance, 1000 + static_cast<std::uint64_t>(i)).next_u64());
            const auto t = local_search(nearest_neighbor_tour(inst), inst, LocalSearchMode::two_opt);
            within += t.length <= 1.05 * oracle::tsp_optimum(inst);
        }
        d << worse << " longer, " << infeasible << " infeasible of 2000 runs; n=7 within 5%: " << within << "/100";
        return worse == 0 && infeasible == 0 && within >= 90;
    });

    criterion(11, "determinism at one thread", [&](std::ostream& d) {
        const int saved = omp_get_max_threads();
        omp_set_num_threads(1);
        TrainConfig c;
        c.seed = 5;
        c.n_nodes = 12;
        c.epochs = 2;
        c.instances_per_epoch = 3;
        c.h = 6;
        c.validation_instances = 2;
        const auto a = train(c), b = train(c);
        const bool csv_same = a.metrics.csv(false) == b.metrics.csv(false);
        const bool net_same = checkpoint_text(a.net, c) == checkpoint_text(b.net, c);
        const auto inst = generate_cvrp(20, 77);
        EvalOptions o;
        o.mode = DecodeMode::depot_guided;
        o.seed = 7;
        const bool route_same = solve_instance(a.net, inst, o).route == solve_instance(b.net, inst, o).route;
        omp_set_num_threads(saved);

        const std::string cli = HBG_CLI_PATH;
        const auto train_cmd = cli + " --threads 1 --seed 3 train --n 10 --epochs 2 --instances 2 --rollouts 4 "
                                     "--validation 2 --no-time 2>/dev/null";
        const auto t1 = run(train_cmd), t2 = run(train_cmd);
        const auto solve_cmd = cli + " --threads 1 --seed 7 solve --mode depot_guided 2>/dev/null";
        const auto s1 = run(solve_cmd), s2 = run(solve_cmd);
        const bool cli_same = !t1.empty() && t1 == t2 && s1.find("route") != std::string::npos && s1 == s2;
        d << "csv " << csv_same << ", weights " << net_same << ", route " << route_same << ", cli " << cli_same;
        return csv_same && net_same && route_same && cli_same;
    });

    std::printf("%s: %d failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
