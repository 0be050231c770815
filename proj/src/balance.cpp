#include "hbg/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hbg/errors.hpp"

namespace hbg {

double step_reward(const Trajectory& trajectory, int t) {
    const int m = static_cast<int>(trajectory.records.size());
    if (t < 1 || t > m) throw IndexError("step_reward: t must be in [1, " + std::to_string(m) + "]");
    return trajectory.records[static_cast<std::size_t>(t - 1)].step_reward;
}

double trajectory_reward(const Trajectory& trajectory) {
    double total = 0.0;
    for (const auto& r : trajectory.records) total += r.step_reward;
    return total;
}

std::vector<double> log_reward_transform(const std::vector<double>& lengths, double beta) {
    if (lengths.empty()) throw ParameterError("reward_transform: need at least one length");
    double mean = 0.0;
    for (double l : lengths) {
        if (!(l > 0.0)) throw ParameterError("reward_transform: lengths must be positive");
        mean += l;
    }
    mean /= static_cast<double>(lengths.size());
    std::vector<double> out;
    out.reserve(lengths.size());
    for (double l : lengths) out.push_back(beta * (mean - l) / mean);
    return out;
}

std::vector<double> reward_transform(const std::vector<double>& lengths, double beta) {
    auto out = log_reward_transform(lengths, beta);
    for (double& v : out) v = std::exp(v);
    return out;
}

EnergyTable energy_table(const std::vector<Trajectory>& trajectories, EnergySign sign) {
    EnergyTable table;
    table.h = static_cast<int>(trajectories.size());
    for (const auto& t : trajectories) table.steps = std::max(table.steps, static_cast<int>(t.records.size()));
    table.values.assign(trajectories.size(), std::vector<double>(static_cast<std::size_t>(table.steps), 0.0));
    if (table.h < 2) return table;

    const double s = sign == EnergySign::centered ? 1.0 : -1.0;
    for (int t = 0; t < table.steps; ++t) {
        // Mean taken relative to one member, so a column of equal rewards centres to exactly zero.
        double pivot = 0.0, sum = 0.0;
        int active = 0;
        for (const auto& tr : trajectories) {
            if (t < static_cast<int>(tr.records.size())) {
                const double v = tr.records[static_cast<std::size_t>(t)].step_reward;
                if (active == 0) pivot = v;
                sum += v - pivot;
                ++active;
            }
        }
        const double mean = pivot + sum / active;
        for (std::size_t i = 0; i < trajectories.size(); ++i) {
            const auto& recs = trajectories[i].records;
            if (t < static_cast<int>(recs.size()))
                table.values[i][static_cast<std::size_t>(t)] = s * (recs[static_cast<std::size_t>(t)].step_reward - mean);
        }
    }
    return table;
}

void apply_energies(std::vector<Trajectory>& trajectories, const EnergyTable& table) {
    if (static_cast<int>(trajectories.size()) != table.h) throw ShapeError("apply_energies: batch size mismatch");
    for (std::size_t i = 0; i < trajectories.size(); ++i)
        for (std::size_t t = 0; t < trajectories[i].records.size(); ++t)
            trajectories[i].records[t].energy_to = table.values[i][t];
}

void fill_flows(Trajectory& trajectory, const std::vector<double>& node_flow) {
    auto& recs = trajectory.records;
    if (recs.empty()) return;
    double running = node_flow.at(static_cast<std::size_t>(recs.front().from_node));
    double prev = running;
    for (std::size_t t = 0; t < recs.size(); ++t) {
        running += node_flow.at(static_cast<std::size_t>(recs[t].to_node));
        const double next = running / static_cast<double>(t + 2);
        recs[t].flow_from = prev;
        recs[t].flow_to = next;
        prev = next;
    }
}

double backward_step_prob(int a, int j, bool at_depot) {
    if (a < 0 || j < 0) throw DomainError("backward_step_prob: counts must be non-negative");
    if (!at_depot) return 1.0;
    if (2 * a + j < 1) throw DomainError("backward_step_prob: no sub-route to step back into at the depot");
    return 1.0 / static_cast<double>(2 * a + j);
}

double backward_traj_logprob(int a, int j) {
    if (a < 0 || j < 0) throw DomainError("backward_traj_logprob: counts must be non-negative");
    return -(std::lgamma(static_cast<double>(a + j) + 1.0) + a * std::numbers::ln2);
}

double backward_traj_logprob(const RouteDecomposition& decomp) { return backward_traj_logprob(decomp.a, decomp.j); }

double trajectory_log_pb(const Trajectory& trajectory, BackwardMode mode, int depot) {
    if (mode == BackwardMode::uniform_pb_one || trajectory.kind == ProblemKind::TSP) return 0.0;
    return backward_traj_logprob(decompose(trajectory, depot));
}

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

double tb_residual(const Trajectory& t, double log_z, double log_reward, BackwardMode mode, int depot) {
    double log_pf = 0.0;
    for (const auto& r : t.records) log_pf += r.log_pf;
    return log_z + log_pf - log_reward - trajectory_log_pb(t, mode, depot);
}

std::vector<double> checked_logs(const std::vector<double>& rewards, std::size_t h) {
    if (rewards.size() != h) throw ShapeError("rewards and trajectories differ in count");
    std::vector<double> out;
    out.reserve(h);
    for (double r : rewards) {
        if (!(r > 0.0) || !std::isfinite(r)) throw NumericError("rewards must be positive and finite");
        out.push_back(std::log(r));
    }
    return out;
}

}  // namespace

double tb_loss(const std::vector<Trajectory>& trajectories, double log_z, const std::vector<double>& rewards,
               BackwardMode mode, int depot) {
    if (trajectories.empty()) throw ParameterError("tb_loss: need at least one trajectory");
    require_finite(log_z, "log Z");
    const auto logs = checked_logs(rewards, trajectories.size());
    double total = 0.0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const double r = tb_residual(trajectories[i], log_z, logs[i], mode, depot);
        require_finite(r, "trajectory-balance residual");
        total += r * r;
    }
    return total / static_cast<double>(trajectories.size());
}

double db_loss_step(const StateRecord& record) {
    const double r = record.log_pf + record.flow_from + record.energy_to - record.log_pb - record.flow_to;
    require_finite(r, "detailed-balance residual");
    return r * r;
}

double db_loss_trajectory(const Trajectory& trajectory) {
    double total = 0.0;
    for (const auto& r : trajectory.records) total += db_loss_step(r);
    return total;
}

LossBreakdown hybrid_loss(const std::vector<Trajectory>& trajectories, double log_z, const std::vector<double>& rewards,
                          double lambda, BackwardMode mode, double tb_weight, int depot) {
    if (!(lambda >= 0.0) || !(tb_weight >= 0.0)) throw ParameterError("hybrid_loss: weights must be non-negative");
    if (trajectories.empty()) throw ParameterError("hybrid_loss: need at least one trajectory");
    const auto logs = checked_logs(rewards, trajectories.size());
    LossBreakdown out;
    out.lambda_used = lambda;
    out.tb_weight = tb_weight;
    double tb_sum = 0.0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const double r = tb_residual(trajectories[i], log_z, logs[i], mode, depot);
        require_finite(r, "trajectory-balance residual");
        const double db_i = db_loss_trajectory(trajectories[i]);
        out.per_trajectory.emplace_back(r * r, db_i);
        tb_sum += r * r;
        out.db += db_i;
    }
    out.tb = tb_sum / static_cast<double>(trajectories.size());
    out.hybrid = tb_weight * out.tb + lambda * out.db;
    return out;
}

ObjectiveTerms build_objective(const PolicyNet& net, const std::vector<ad::Var>& params, const GraphForward& forward,
                               const VrpInstance& instance, const SparseGraph& graph,
                               const std::vector<Trajectory>& trajectories, const std::vector<double>& log_rewards,
                               const ObjectiveOptions& options) {
    if (trajectories.empty()) throw ParameterError("build_objective: need at least one trajectory");
    if (log_rewards.size() != trajectories.size()) throw ShapeError("build_objective: reward count mismatch");
    ad::Tape& tape = *params.front().tape;

    // Replay every trajectory once; virtual edges of all trajectories share one head evaluation.
    std::vector<std::vector<ad::PickStep>> picks(trajectories.size());
    std::vector<double> virtual_dists;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        for (const auto& step : replay(instance, graph, trajectories[i])) {
            ad::PickStep ps;
            ps.chosen = step.chosen;
            for (const auto& c : step.candidates) {
                if (c.edge >= 0) {
                    ps.candidates.push_back(c.edge);
                } else {
                    const int from = trajectories[i].records[picks[i].size()].from_node;
                    virtual_dists.push_back(distance_unchecked(instance, from, c.node));
                    ps.candidates.push_back(-static_cast<int>(virtual_dists.size()));
                }
            }
            picks[i].push_back(std::move(ps));
        }
    }
    ad::Var virtual_logits;
    if (!virtual_dists.empty()) virtual_logits = virtual_edge_logits(net, params, virtual_dists);
    const ad::Var log_z = params[static_cast<std::size_t>(net.layout().log_z)];

    ObjectiveTerms out;
    ad::Var tb_total = tape.scalar(0.0);
    ad::Var db_total = tape.scalar(0.0);
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto& t = trajectories[i];
        const int m = static_cast<int>(t.records.size());
        ad::Var log_pf = ad::log_softmax_pick(forward.edge_logits, virtual_logits, std::move(picks[i]));

        const double tb_const = -log_rewards[i] - trajectory_log_pb(t, options.mode, instance.depot);
        ad::Var tb_res = ad::shift(ad::add(ad::sum(log_pf), log_z), tb_const);
        tb_total = ad::add(tb_total, ad::square(tb_res));

        std::vector<int> states;
        states.reserve(static_cast<std::size_t>(m) + 1);
        states.push_back(t.records.front().from_node);
        std::vector<double> db_const;
        db_const.reserve(static_cast<std::size_t>(m));
        for (const auto& r : t.records) {
            states.push_back(r.to_node);
            db_const.push_back(r.energy_to - r.log_pb);
        }
        ad::Var flows = ad::prefix_mean(forward.node_flow, std::move(states));
        ad::Var res = ad::add_const(
            ad::sub(ad::add(log_pf, ad::slice_rows(flows, 0, m)), ad::slice_rows(flows, 1, m + 1)), std::move(db_const));
        ad::Var sq = ad::square(res);
        out.db_steps.push_back(sq);
        db_total = ad::add(db_total, ad::sum(sq));
    }

    out.tb = ad::scale(tb_total, 1.0 / static_cast<double>(trajectories.size()));
    out.db = db_total;
    out.hybrid = ad::add(ad::scale(out.tb, options.tb_weight), ad::scale(out.db, options.lambda));
    return out;
}

}  // namespace hbg
