#pragma once

#include <utility>
#include <vector>

#include "hbg/autodiff.hpp"
#include "hbg/policy_net.hpp"
#include "hbg/sampler.hpp"

namespace hbg {

/// R(s_t) = d(x_{t-1}, x_t) for 1 <= t <= m.
double step_reward(const Trajectory& trajectory, int t);
/// Total route length R(tau).
double trajectory_reward(const Trajectory& trajectory);

/// R~_i = exp(beta * (mean(L) - L_i) / mean(L)); scale-invariant, decreasing in L_i.
std::vector<double> reward_transform(const std::vector<double>& lengths, double beta);
/// log R~_i without the exp round trip.
std::vector<double> log_reward_transform(const std::vector<double>& lengths, double beta);

/// centered: step reward minus the column mean; negated: the opposite sign.
enum class EnergySign { centered, negated };

/// values[i][t] is the energy of s_{t+1} in trajectory i (aligned by transition
/// index). Each column is the step reward minus the mean over the trajectories
/// that have transition t; trajectories that already ended hold zero.
struct EnergyTable {
    int h = 0;
    int steps = 0;
    std::vector<std::vector<double>> values;

    double at(int i, int t) const { return values[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]; }
};

EnergyTable energy_table(const std::vector<Trajectory>& trajectories, EnergySign sign = EnergySign::centered);
void apply_energies(std::vector<Trajectory>& trajectories, const EnergyTable& table);

/// Sets flow_from/flow_to from per-node flow-head outputs (log space).
void fill_flows(Trajectory& trajectory, const std::vector<double>& node_flow);

/// 1 / (2a + j) when stepping back from the depot, 1 otherwise.
double backward_step_prob(int a, int j, bool at_depot);

/// log P_B = -(log (a + j)! + a log 2).
double backward_traj_logprob(int a, int j);
double backward_traj_logprob(const RouteDecomposition& decomp);

enum class BackwardMode { closed_form_pb, uniform_pb_one };

double trajectory_log_pb(const Trajectory& trajectory, BackwardMode mode, int depot = 0);

/// mean_i (logZ + sum_t log_pf - log R~_i - log P_B(tau_i))^2
double tb_loss(const std::vector<Trajectory>& trajectories, double log_z, const std::vector<double>& rewards,
               BackwardMode mode, int depot = 0);

/// (log_pf + flow_from + energy_to - log_pb - flow_to)^2; the predecessor energy is zero.
double db_loss_step(const StateRecord& record);
double db_loss_trajectory(const Trajectory& trajectory);

struct LossBreakdown {
    double tb = 0.0;
    double db = 0.0;  // summed over trajectories
    double hybrid = 0.0;
    std::vector<std::pair<double, double>> per_trajectory;  // (tb_i, db_i)
    double lambda_used = 0.0;
    double tb_weight = 1.0;
};

/// hybrid = tb_weight * tb + lambda * sum_i db_i; tb_weight 0 is the DB-only mode.
LossBreakdown hybrid_loss(const std::vector<Trajectory>& trajectories, double log_z, const std::vector<double>& rewards,
                          double lambda, BackwardMode mode, double tb_weight = 1.0, int depot = 0);

struct ObjectiveOptions {
    double lambda = 1.0;
    double tb_weight = 1.0;
    BackwardMode mode = BackwardMode::closed_form_pb;
};

struct ObjectiveTerms {
    ad::Var tb;
    ad::Var db;
    ad::Var hybrid;
    std::vector<ad::Var> db_steps;  // per trajectory, m x 1 squared DB residuals
};

/// Differentiable hybrid objective over recorded trajectories of one instance.
/// Log-probabilities and flows are recomputed on the tape from the forward pass;
/// trajectories must carry energies (apply_energies) and log_pb.
ObjectiveTerms build_objective(const PolicyNet& net, const std::vector<ad::Var>& params, const GraphForward& forward,
                               const VrpInstance& instance, const SparseGraph& graph,
                               const std::vector<Trajectory>& trajectories, const std::vector<double>& log_rewards,
                               const ObjectiveOptions& options);

}  // namespace hbg
