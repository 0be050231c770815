#include "hbg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hbg/balance.hpp"
#include "hbg/errors.hpp"

namespace hbg {

namespace {

/// Nearest unvisited customer that fits, ties to the lower index; -1 if none.
int nearest_feasible(const VrpInstance& instance, const std::vector<bool>& visited, int current, int remaining) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < instance.size(); ++c) {
        if (c == current || visited[static_cast<std::size_t>(c)]) continue;
        if (instance.is_cvrp() && (c == instance.depot || instance.demand(c) > remaining)) continue;
        const double d = distance_unchecked(instance, current, c);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

bool customer_allowed(const VrpInstance& instance, const std::vector<bool>& visited, int c, int remaining) {
    if (visited[static_cast<std::size_t>(c)]) return false;
    if (!instance.is_cvrp()) return true;
    return c != instance.depot && instance.demand(c) <= remaining;
}

// Shared by feasible_mask and RouteBuilder. Neighbour-ordered candidates, a
// fallback candidate last. Does not cover the TSP closing move.
std::vector<Candidate> open_candidates(const VrpInstance& instance, const SparseGraph& graph,
                                       const std::vector<bool>& visited, int current, int remaining, bool any_unvisited) {
    std::vector<Candidate> out;
    const auto& nb = graph.neighbors(current);
    const int base = graph.offsets[static_cast<std::size_t>(current)];
    bool has_customer = false;
    bool has_depot = false;
    const bool at_depot = instance.is_cvrp() && current == instance.depot;
    for (std::size_t r = 0; r < nb.size(); ++r) {
        const int v = nb[r];
        if (instance.is_cvrp() && v == instance.depot) {
            if (!at_depot) {
                out.push_back({v, base + static_cast<int>(r)});
                has_depot = true;
            }
            continue;
        }
        if (customer_allowed(instance, visited, v, remaining)) {
            out.push_back({v, base + static_cast<int>(r)});
            has_customer = true;
        }
    }
    if (instance.is_cvrp() && !at_depot && !has_depot) out.push_back({instance.depot, -1});
    if (!has_customer && any_unvisited) {
        const int fb = nearest_feasible(instance, visited, current, remaining);
        if (fb >= 0) out.push_back({fb, -1});
    }
    return out;
}

int count_unvisited(const VrpInstance& instance, const std::vector<bool>& visited) {
    int n = 0;
    for (int c = 0; c < instance.size(); ++c)
        if (!visited[static_cast<std::size_t>(c)] && !(instance.is_cvrp() && c == instance.depot)) ++n;
    return n;
}

void fill_backward(Trajectory& t, int depot) {
    if (t.kind != ProblemKind::CVRP) {
        for (auto& r : t.records) r.log_pb = 0.0;
        return;
    }
    int a = 0, j = 0, in_segment = 0;
    for (auto& r : t.records) {
        if (r.to_node == depot) {
            if (in_segment >= 2) ++a;
            else if (in_segment == 1) ++j;
            in_segment = 0;
            r.log_pb = std::log(backward_step_prob(a, j, true));
        } else {
            ++in_segment;
            r.log_pb = 0.0;
        }
    }
}

}  // namespace

std::vector<bool> feasible_mask(const VrpInstance& instance, const SparseGraph& graph, const std::vector<bool>& visited,
                                int current, int remaining_capacity) {
    const bool any = count_unvisited(instance, visited) > 0;
    std::vector<bool> mask(static_cast<std::size_t>(instance.size()), false);
    for (const auto& c : open_candidates(instance, graph, visited, current, remaining_capacity, any))
        mask[static_cast<std::size_t>(c.node)] = true;
    return mask;
}

RouteBuilder::RouteBuilder(const VrpInstance& instance, const SparseGraph& graph, int start)
    : instance_(&instance), graph_(&graph), visited_(static_cast<std::size_t>(instance.size()), false) {
    if (graph.n != instance.size()) throw ConsistencyError("RouteBuilder: graph and instance differ");
    if (start < 0 || start >= instance.size()) throw IndexError("RouteBuilder: start node out of range");
    nodes_.push_back(start);
    visited_[static_cast<std::size_t>(start)] = true;
    remaining_ = instance.is_cvrp() ? *instance.capacity : 0;
    unvisited_ = count_unvisited(instance, visited_);
}

bool RouteBuilder::done() const {
    if (instance_->is_cvrp()) return unvisited_ == 0 && current() == instance_->depot && nodes_.size() > 1;
    return unvisited_ == 0 && nodes_.size() == static_cast<std::size_t>(instance_->size()) + 1;
}

std::vector<Candidate> RouteBuilder::candidates() const {
    if (done()) return {};
    if (!instance_->is_cvrp() && unvisited_ == 0) {
        const int start = nodes_.front();
        return {{start, graph_->find_edge(current(), start)}};
    }
    return open_candidates(*instance_, *graph_, visited_, current(), remaining_, unvisited_ > 0);
}

void RouteBuilder::step(int node) {
    const bool depot = instance_->is_cvrp() && node == instance_->depot;
    if (depot) {
        remaining_ = *instance_->capacity;
    } else if (node != nodes_.front() || instance_->is_cvrp()) {
        if (visited_[static_cast<std::size_t>(node)]) throw InvariantError("node " + std::to_string(node) + " revisited");
        visited_[static_cast<std::size_t>(node)] = true;
        --unvisited_;
        remaining_ -= instance_->demand(node);
    }
    nodes_.push_back(node);
}

ScoreFn policy_scorer(const PolicyNet& net, const PolicyOutput& output, const VrpInstance& instance) {
    return [&net, &output, &instance](int from, const Candidate& c) {
        if (c.edge >= 0) return output.edge_logits[static_cast<std::size_t>(c.edge)];
        return virtual_edge_logit(net, distance_unchecked(instance, from, c.node));
    };
}

Trajectory construct(const VrpInstance& instance, const SparseGraph& graph, const ScoreFn& score,
                     const DecodeRule& rule, Rng& rng, int tsp_start) {
    if (!(rule.temperature > 0.0)) throw ParameterError("construct: temperature must be positive");
    int start = instance.depot;
    if (!instance.is_cvrp()) start = tsp_start >= 0 ? tsp_start : static_cast<int>(rng.uniform_int(0, instance.size() - 1));

    RouteBuilder builder(instance, graph, start);
    Trajectory t;
    t.kind = instance.kind;
    std::vector<double> z;
    while (!builder.done()) {
        const int cur = builder.current();
        const auto cands = builder.candidates();
        if (cands.empty())
            throw InfeasibleError("no feasible move at node " + std::to_string(cur) + " after " +
                                  std::to_string(builder.nodes().size()) + " steps, remaining capacity " +
                                  std::to_string(builder.remaining_capacity()));
        z.resize(cands.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cands.size(); ++c) {
            z[c] = score(cur, cands[c]) / rule.temperature;
            mx = std::max(mx, z[c]);
        }
        double total = 0.0;
        for (double v : z) total += std::exp(v - mx);
        const double lse = mx + std::log(total);

        const bool depot_state = instance.is_cvrp() && cur == instance.depot;
        const Choice choice = depot_state ? rule.at_depot : rule.at_customer;
        std::size_t pick = 0;
        if (cands.size() > 1) {
            if (choice == Choice::greedy) {
                for (std::size_t c = 1; c < cands.size(); ++c)
                    if (z[c] > z[pick] || (z[c] == z[pick] && cands[c].node < cands[pick].node)) pick = c;
            } else {
                const double u = rng.uniform();
                double acc = 0.0;
                pick = cands.size() - 1;
                for (std::size_t c = 0; c < cands.size(); ++c) {
                    acc += std::exp(z[c] - lse);
                    if (u < acc) {
                        pick = c;
                        break;
                    }
                }
            }
        }
        StateRecord r;
        r.from_node = cur;
        r.to_node = cands[pick].node;
        r.log_pf = z[pick] - lse;
        r.step_reward = distance_unchecked(instance, cur, r.to_node);
        t.records.push_back(r);
        t.length += r.step_reward;
        builder.step(r.to_node);
    }
    t.nodes = builder.nodes();
    if (!instance.is_cvrp()) t.nodes.pop_back();
    fill_backward(t, instance.depot);
    return t;
}

std::vector<Trajectory> sample_trajectories(const VrpInstance& instance, const SparseGraph& graph,
                                            const ScoreFn& score, int h, const Rng& rng, double temperature) {
    if (h < 1) throw ParameterError("sample_trajectories: h must be >= 1");
    std::vector<Trajectory> out(static_cast<std::size_t>(h));
    const DecodeRule rule{Choice::sample, Choice::sample, temperature};
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < h; ++r) {
        Rng stream = rng.stream(StreamPurpose::trajectory, static_cast<std::uint64_t>(r));
        out[static_cast<std::size_t>(r)] = construct(instance, graph, score, rule, stream, -1);
    }
    return out;
}

std::vector<Trajectory> sample_trajectories(const PolicyNet& net, const VrpInstance& instance,
                                            const SparseGraph& graph, int h, const Rng& rng) {
    const auto output = gnn_forward(net, build_features(instance, graph), graph, false);
    return sample_trajectories(instance, graph, policy_scorer(net, output, instance), h, rng);
}

Trajectory depot_guided_decode(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph, Rng rng,
                               double temperature) {
    if (!instance.is_cvrp()) throw UnsupportedModeError("depot-guided decoding needs a depot (CVRP)");
    const auto output = gnn_forward(net, build_features(instance, graph), graph, false);
    return construct(instance, graph, policy_scorer(net, output, instance), {Choice::sample, Choice::greedy, temperature},
                     rng);
}

Trajectory greedy_decode(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph) {
    const auto output = gnn_forward(net, build_features(instance, graph), graph, false);
    Rng unused(0);
    return construct(instance, graph, policy_scorer(net, output, instance), {Choice::greedy, Choice::greedy, 1.0},
                     unused, 0);
}

RouteDecomposition decompose(const Trajectory& trajectory, int depot) {
    const auto& nodes = trajectory.nodes;
    if (trajectory.kind != ProblemKind::CVRP) throw InvariantError("decompose: only CVRP trajectories have sub-routes");
    if (nodes.empty() || nodes.front() != depot || nodes.back() != depot)
        throw InvariantError("decompose: trajectory must start and end at the depot");
    RouteDecomposition d;
    std::vector<int> seg;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (nodes[i] == depot) {
            if (seg.empty() && nodes.size() > 2) throw InvariantError("decompose: consecutive depot visits");
            if (seg.size() >= 2) ++d.a;
            else if (seg.size() == 1) ++d.j;
            if (!seg.empty()) d.segments.push_back(std::move(seg));
            seg.clear();
        } else {
            seg.push_back(nodes[i]);
        }
    }
    return d;
}

std::vector<ReplayStep> replay(const VrpInstance& instance, const SparseGraph& graph, const Trajectory& trajectory) {
    const auto& nodes = trajectory.nodes;
    if (nodes.empty()) throw InvariantError("replay: empty trajectory");
    RouteBuilder builder(instance, graph, nodes.front());
    std::vector<ReplayStep> steps;
    const std::size_t moves = instance.is_cvrp() ? nodes.size() - 1 : nodes.size();
    for (std::size_t i = 0; i < moves; ++i) {
        const int next = instance.is_cvrp() ? nodes[i + 1] : nodes[(i + 1) % nodes.size()];
        ReplayStep s;
        s.candidates = builder.candidates();
        const auto it = std::find_if(s.candidates.begin(), s.candidates.end(), [next](const Candidate& c) { return c.node == next; });
        if (it == s.candidates.end())
            throw InvariantError("replay: move " + std::to_string(builder.current()) + " -> " + std::to_string(next) +
                                 " is not feasible at step " + std::to_string(i));
        s.chosen = static_cast<int>(it - s.candidates.begin());
        builder.step(next);
        steps.push_back(std::move(s));
    }
    if (!builder.done()) throw InvariantError("replay: trajectory is incomplete");
    return steps;
}

Trajectory make_trajectory(const VrpInstance& instance, std::vector<int> nodes) {
    Trajectory t;
    t.kind = instance.kind;
    t.nodes = std::move(nodes);
    if (t.nodes.empty()) throw InvariantError("make_trajectory: empty node sequence");
    if (instance.is_cvrp() && (t.nodes.front() != instance.depot || t.nodes.back() != instance.depot))
        throw InvariantError("make_trajectory: CVRP routes must start and end at the depot");
    const std::size_t moves = instance.is_cvrp() ? t.nodes.size() - 1 : t.nodes.size();
    for (std::size_t i = 0; i < moves; ++i) {
        StateRecord r;
        r.from_node = t.nodes[i];
        r.to_node = t.nodes[(i + 1) % t.nodes.size()];
        r.step_reward = distance(instance, r.from_node, r.to_node);
        t.length += r.step_reward;
        t.records.push_back(r);
    }
    fill_backward(t, instance.depot);
    return t;
}

void validate_trajectory(const VrpInstance& instance, const Trajectory& trajectory) {
    const auto& nodes = trajectory.nodes;
    const int n = instance.size();
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int v : nodes) {
        if (v < 0 || v >= n) throw InvariantError("trajectory node out of range");
        if (!(instance.is_cvrp() && v == instance.depot)) ++seen[static_cast<std::size_t>(v)];
    }
    for (int v = 0; v < n; ++v) {
        if (instance.is_cvrp() && v == instance.depot) continue;
        if (seen[static_cast<std::size_t>(v)] != 1)
            throw InvariantError("node " + std::to_string(v) + " visited " + std::to_string(seen[static_cast<std::size_t>(v)]) +
                                 " times");
    }
    if (instance.is_cvrp()) {
        if (nodes.front() != instance.depot || nodes.back() != instance.depot)
            throw InvariantError("CVRP trajectory must start and end at the depot");
        int load = 0;
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            if (nodes[i] == instance.depot) {
                if (nodes[i - 1] == instance.depot) throw InvariantError("consecutive depot visits");
                load = 0;
            } else {
                load += instance.demand(nodes[i]);
                if (load > *instance.capacity) throw InvariantError("capacity exceeded on a route");
            }
        }
    }
    double total = 0.0;
    for (const auto& r : trajectory.records) total += r.step_reward;
    if (std::abs(total - trajectory.length) > 1e-9) throw InvariantError("length disagrees with step rewards");
}

void to_json(nlohmann::json& j, const StateRecord& r) {
    j = nlohmann::json{{"from", r.from_node},         {"to", r.to_node},         {"log_pf", r.log_pf},
                       {"log_pb", r.log_pb},          {"flow_from", r.flow_from}, {"flow_to", r.flow_to},
                       {"step_reward", r.step_reward}, {"energy_to", r.energy_to}};
}

void to_json(nlohmann::json& j, const Trajectory& t) {
    j = nlohmann::json{{"kind", to_string(t.kind)}, {"nodes", t.nodes}, {"length", t.length}, {"records", t.records}};
}

}  // namespace hbg
