#include "hbg/acosearch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hbg/errors.hpp"

namespace hbg {

namespace {

constexpr double kImprovement = 1e-12;

double clip(double v, const AcoParams& p) { return std::clamp(v, p.tau_min, p.tau_max); }

void check_params(const AcoParams& p) {
    if (!(p.tau_min > 0.0) || p.tau_max < p.tau_min) throw ParameterError("ACO: need 0 < tau_min <= tau_max");
    if (p.rho < 0.0 || p.rho > 1.0) throw ParameterError("ACO: rho must lie in [0, 1]");
}

double heuristic(double d) { return 1.0 / std::max(d, 1e-12); }

}  // namespace

PheromoneMap heuristic_to_pheromone(const PolicyOutput& output, const SparseGraph& graph, const AcoParams& params) {
    check_params(params);
    if (static_cast<int>(output.edge_logits.size()) != graph.edge_count())
        throw ShapeError("heuristic_to_pheromone: logits do not match graph");
    PheromoneMap map;
    map.params = params;
    map.tau.resize(output.edge_logits.size());
    map.eta.resize(output.edge_logits.size());
    for (int i = 0; i < graph.n; ++i) {
        const int lo = graph.offsets[static_cast<std::size_t>(i)], hi = graph.offsets[static_cast<std::size_t>(i) + 1];
        double mx = -std::numeric_limits<double>::infinity();
        for (int e = lo; e < hi; ++e) {
            if (!std::isfinite(output.edge_logits[static_cast<std::size_t>(e)]))
                throw NumericError("heuristic_to_pheromone: non-finite logit");
            mx = std::max(mx, output.edge_logits[static_cast<std::size_t>(e)]);
        }
        double total = 0.0;
        for (int e = lo; e < hi; ++e) total += std::exp(output.edge_logits[static_cast<std::size_t>(e)] - mx);
        for (int e = lo; e < hi; ++e) {
            const auto k = static_cast<std::size_t>(e);
            map.tau[k] = clip(std::exp(output.edge_logits[k] - mx) / total, params);
            map.eta[k] = heuristic(graph.edge_dist[k]);
        }
    }
    return map;
}

PheromoneMap uniform_pheromone(const SparseGraph& graph, double value, const AcoParams& params) {
    check_params(params);
    PheromoneMap map;
    map.params = params;
    map.tau.assign(static_cast<std::size_t>(graph.edge_count()), clip(value, params));
    map.eta.resize(static_cast<std::size_t>(graph.edge_count()));
    for (int e = 0; e < graph.edge_count(); ++e) map.eta[static_cast<std::size_t>(e)] = heuristic(graph.edge_dist[static_cast<std::size_t>(e)]);
    return map;
}

std::vector<Trajectory> ant_construct(const PheromoneMap& map, const VrpInstance& instance, const SparseGraph& graph,
                                      int n_ants, const Rng& rng, const DecodeRule& rule) {
    if (n_ants < 1) throw ParameterError("ant_construct: n_ants must be >= 1");
    if (static_cast<int>(map.tau.size()) != graph.edge_count()) throw ShapeError("ant_construct: map does not match graph");
    const AcoParams& p = map.params;
    const ScoreFn score = [&](int from, const Candidate& c) {
        if (c.edge >= 0) {
            const auto e = static_cast<std::size_t>(c.edge);
            return p.alpha * std::log(map.tau[e]) + p.beta_h * std::log(map.eta[e]);
        }
        return p.alpha * std::log(p.tau_min) + p.beta_h * std::log(heuristic(distance_unchecked(instance, from, c.node)));
    };
    std::vector<Trajectory> out(static_cast<std::size_t>(n_ants));
#pragma omp parallel for schedule(dynamic)
    for (int a = 0; a < n_ants; ++a) {
        Rng stream = rng.stream(StreamPurpose::ant, static_cast<std::uint64_t>(a));
        out[static_cast<std::size_t>(a)] = construct(instance, graph, score, rule, stream, -1);
    }
    return out;
}

namespace {

using Route = std::vector<int>;  // depot, customers..., depot  (TSP: the cycle)

double d(const VrpInstance& inst, int a, int b) { return distance_unchecked(inst, a, b); }

// 2-opt on a path whose endpoints stay fixed; returns true if anything changed.
bool two_opt_path(Route& p, const VrpInstance& inst) {
    bool any = false;
    bool improved = true;
    const int len = static_cast<int>(p.size());
    while (improved) {
        improved = false;
        for (int i = 0; i + 3 < len && !improved; ++i) {
            for (int j = i + 2; j + 1 < len; ++j) {
                const double delta = d(inst, p[i], p[j]) + d(inst, p[i + 1], p[j + 1]) - d(inst, p[i], p[i + 1]) -
                                     d(inst, p[j], p[j + 1]);
                if (delta < -kImprovement) {
                    std::reverse(p.begin() + i + 1, p.begin() + j + 1);
                    improved = any = true;
                    break;
                }
            }
        }
    }
    return any;
}

bool two_opt_cycle(Route& t, const VrpInstance& inst) {
    // Closing the cycle as a path from t[0] back to t[0] keeps the start fixed.
    Route p = t;
    p.push_back(t.front());
    const bool changed = two_opt_path(p, inst);
    p.pop_back();
    t = std::move(p);
    return changed;
}

int route_load(const Route& r, const VrpInstance& inst) {
    int load = 0;
    for (int v : r) load += inst.demand(v);
    return load;
}

// One first-improvement relocate; true if applied.
bool relocate_once(std::vector<Route>& routes, const VrpInstance& inst) {
    const int cap = *inst.capacity;
    for (std::size_t r1 = 0; r1 < routes.size(); ++r1) {
        Route& from = routes[r1];
        for (std::size_t pos = 1; pos + 1 < from.size(); ++pos) {
            const int c = from[pos];
            const double removal = d(inst, from[pos - 1], from[pos + 1]) - d(inst, from[pos - 1], c) - d(inst, c, from[pos + 1]);
            for (std::size_t r2 = 0; r2 < routes.size(); ++r2) {
                if (r2 == r1) continue;
                Route& to = routes[r2];
                if (route_load(to, inst) + inst.demand(c) > cap) continue;
                for (std::size_t q = 0; q + 1 < to.size(); ++q) {
                    const double insertion = d(inst, to[q], c) + d(inst, c, to[q + 1]) - d(inst, to[q], to[q + 1]);
                    if (removal + insertion < -kImprovement) {
                        to.insert(to.begin() + static_cast<std::ptrdiff_t>(q) + 1, c);
                        from.erase(from.begin() + static_cast<std::ptrdiff_t>(pos));
                        if (from.size() == 2) routes.erase(routes.begin() + static_cast<std::ptrdiff_t>(r1));
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

}  // namespace

Trajectory local_search(const Trajectory& trajectory, const VrpInstance& instance, LocalSearchMode mode) {
    validate_trajectory(instance, trajectory);
    bool changed = false;
    std::vector<int> nodes;
    if (!instance.is_cvrp()) {
        Route t = trajectory.nodes;
        changed = two_opt_cycle(t, instance);
        nodes = std::move(t);
    } else {
        std::vector<Route> routes;
        Route cur{instance.depot};
        for (std::size_t i = 1; i < trajectory.nodes.size(); ++i) {
            cur.push_back(trajectory.nodes[i]);
            if (trajectory.nodes[i] == instance.depot) {
                if (cur.size() > 2) routes.push_back(cur);
                cur = {instance.depot};
            }
        }
        bool improved = true;
        while (improved) {
            improved = false;
            for (auto& r : routes) improved = two_opt_path(r, instance) || improved;
            if (mode == LocalSearchMode::two_opt_plus_relocate && relocate_once(routes, instance)) improved = true;
            changed = changed || improved;
        }
        nodes.push_back(instance.depot);
        for (const auto& r : routes) nodes.insert(nodes.end(), r.begin() + 1, r.end());
    }
    if (!changed) return trajectory;
    Trajectory out = make_trajectory(instance, std::move(nodes));
    if (out.length > trajectory.length + kImprovement) return trajectory;
    return out;
}

PheromoneMap pheromone_update(const PheromoneMap& map, const SparseGraph& graph, const std::vector<Trajectory>& tours,
                              int elite_count) {
    if (elite_count < 1) throw ParameterError("pheromone_update: elite_count must be >= 1");
    const AcoParams& p = map.params;
    PheromoneMap out = map;
    for (double& t : out.tau) t *= (1.0 - p.rho);

    std::vector<std::size_t> order(tours.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return tours[x].length < tours[y].length; });
    const std::size_t elites = std::min(order.size(), static_cast<std::size_t>(elite_count));
    for (std::size_t k = 0; k < elites; ++k) {
        const Trajectory& t = tours[order[k]];
        if (!(t.length > 0.0)) continue;
        const double deposit = p.q / t.length;
        for (const auto& r : t.records) {
            const int e = graph.find_edge(r.from_node, r.to_node);
            if (e >= 0) out.tau[static_cast<std::size_t>(e)] += deposit;
        }
    }
    for (double& t : out.tau) t = clip(t, p);
    return out;
}

AcoResult aco_solve(const PheromoneMap& initial, const VrpInstance& instance, const SparseGraph& graph, int iterations,
                    int n_ants, const Rng& rng, const AcoOptions& options) {
    if (iterations < 1) throw ParameterError("aco_solve: iterations must be >= 1");
    PheromoneMap map = initial;
    map.params = options.params;
    AcoResult result;
    result.best.length = std::numeric_limits<double>::infinity();
    const DecodeRule rule{Choice::sample, options.depot_guided ? Choice::greedy : Choice::sample, 1.0};
    for (int it = 0; it < iterations; ++it) {
        auto ants = ant_construct(map, instance, graph, n_ants, rng.stream(StreamPurpose::ant, static_cast<std::uint64_t>(it) + 1), rule);
        if (options.local_search) {
#pragma omp parallel for schedule(dynamic)
            for (int a = 0; a < n_ants; ++a)
                ants[static_cast<std::size_t>(a)] = local_search(ants[static_cast<std::size_t>(a)], instance, options.ls_mode);
        }
        for (const auto& t : ants)
            if (t.length < result.best.length) result.best = t;
        result.history.push_back(result.best.length);
        if (options.update_pheromones) map = pheromone_update(map, graph, ants, options.params.elite_count);
    }
    return result;
}

AcoResult aco_solve(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph, int iterations,
                    int n_ants, const Rng& rng, const AcoOptions& options) {
    if (iterations < 1) throw ParameterError("aco_solve: iterations must be >= 1");
    const auto output = gnn_forward(net, build_features(instance, graph), graph, false);
    return aco_solve(heuristic_to_pheromone(output, graph, options.params), instance, graph, iterations, n_ants, rng, options);
}

Trajectory nearest_neighbor_tour(const VrpInstance& instance) {
    const int n = instance.size();
    std::vector<bool> visited(static_cast<std::size_t>(n), false);
    std::vector<int> nodes;
    int cur = instance.is_cvrp() ? instance.depot : 0;
    visited[static_cast<std::size_t>(cur)] = true;
    nodes.push_back(cur);
    int remaining = instance.is_cvrp() ? *instance.capacity : 0;
    int left = instance.customer_count() - (instance.is_cvrp() ? 0 : 1);
    while (left > 0) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < n; ++c) {
            if (visited[static_cast<std::size_t>(c)]) continue;
            if (instance.is_cvrp() && instance.demand(c) > remaining) continue;
            const double dist = distance_unchecked(instance, cur, c);
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        if (best < 0) {
            cur = instance.depot;
            remaining = *instance.capacity;
            nodes.push_back(cur);
            continue;
        }
        visited[static_cast<std::size_t>(best)] = true;
        nodes.push_back(best);
        remaining -= instance.demand(best);
        cur = best;
        --left;
    }
    if (instance.is_cvrp()) nodes.push_back(instance.depot);
    return make_trajectory(instance, std::move(nodes));
}

}  // namespace hbg
