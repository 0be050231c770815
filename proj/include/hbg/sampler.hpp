#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "hbg/graphkit.hpp"
#include "hbg/instances.hpp"
#include "hbg/policy_net.hpp"
#include "hbg/rng.hpp"

namespace hbg {

/// One transition s_t -> s_{t+1}. Flows are log F; energy_to is the shaped
/// energy of s_{t+1} (the predecessor energy is always zero).
struct StateRecord {
    int from_node = 0;
    int to_node = 0;
    double log_pf = 0.0;
    double log_pb = 0.0;
    double flow_from = 0.0;
    double flow_to = 0.0;
    double step_reward = 0.0;
    double energy_to = 0.0;
};

/// CVRP: depot ... depot. TSP: a permutation; the closing return to
/// nodes.front() is the last record.
struct Trajectory {
    ProblemKind kind = ProblemKind::CVRP;
    std::vector<int> nodes;
    double length = 0.0;
    std::vector<StateRecord> records;
};

struct RouteDecomposition {
    int a = 0;  // sub-routes with >= 2 customers
    int j = 0;  // sub-routes with exactly one customer
    std::vector<std::vector<int>> segments;
};

/// A feasible next node; edge is the sparse edge id or -1 for a virtual edge.
struct Candidate {
    int node = -1;
    int edge = -1;
};

/// Feasible next nodes given a partial route. Customers must be unvisited,
/// fit the remaining capacity and be k-NN neighbours of `current`; when no
/// neighbour qualifies but some unvisited customer fits, the nearest one is
/// admitted. The depot is allowed from any customer.
std::vector<bool> feasible_mask(const VrpInstance& instance, const SparseGraph& graph, const std::vector<bool>& visited,
                                int current, int remaining_capacity);

/// Incremental construction state shared by every decoder.
class RouteBuilder {
public:
    RouteBuilder(const VrpInstance& instance, const SparseGraph& graph, int start);

    bool done() const;
    int current() const { return nodes_.back(); }
    int remaining_capacity() const { return remaining_; }
    const std::vector<int>& nodes() const { return nodes_; }
    const std::vector<bool>& visited() const { return visited_; }

    /// Candidates in neighbour order; a fallback (virtual) candidate is last.
    std::vector<Candidate> candidates() const;
    void step(int node);

private:
    const VrpInstance* instance_;
    const SparseGraph* graph_;
    std::vector<int> nodes_;
    std::vector<bool> visited_;
    int unvisited_ = 0;
    int remaining_ = 0;
};

/// Logit of moving from `from` along a candidate.
using ScoreFn = std::function<double(int from, const Candidate&)>;

/// Scores from a forward pass; virtual edges go through the edge head.
ScoreFn policy_scorer(const PolicyNet& net, const PolicyOutput& output, const VrpInstance& instance);

enum class Choice { sample, greedy };

struct DecodeRule {
    Choice at_depot = Choice::sample;
    Choice at_customer = Choice::sample;
    double temperature = 1.0;
};

/// Builds one trajectory. TSP starts at `tsp_start` (or a uniform draw when
/// negative). log_pf is the masked softmax of score / temperature.
Trajectory construct(const VrpInstance& instance, const SparseGraph& graph, const ScoreFn& score,
                     const DecodeRule& rule, Rng& rng, int tsp_start = 0);

/// h rollouts, rollout r drawing from rng.stream(trajectory, r).
std::vector<Trajectory> sample_trajectories(const VrpInstance& instance, const SparseGraph& graph,
                                            const ScoreFn& score, int h, const Rng& rng, double temperature = 1.0);
std::vector<Trajectory> sample_trajectories(const PolicyNet& net, const VrpInstance& instance,
                                            const SparseGraph& graph, int h, const Rng& rng);

/// Sample at depot states, argmax at customer states (CVRP only).
Trajectory depot_guided_decode(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph, Rng rng,
                               double temperature = 1.0);
Trajectory greedy_decode(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph);

RouteDecomposition decompose(const Trajectory& trajectory, int depot = 0);

/// Candidate lists and chosen positions reconstructed from a node sequence.
struct ReplayStep {
    std::vector<Candidate> candidates;
    int chosen = 0;
};
/// Throws InvariantError if any move is not feasible.
std::vector<ReplayStep> replay(const VrpInstance& instance, const SparseGraph& graph, const Trajectory& trajectory);

/// Rebuilds records (step rewards, backward probabilities, zero log_pf) after
/// the node sequence was edited, e.g. by local search.
Trajectory make_trajectory(const VrpInstance& instance, std::vector<int> nodes);

/// Throws InvariantError unless every customer appears once, capacity holds
/// and (CVRP) routes are depot-bounded without consecutive depot visits.
void validate_trajectory(const VrpInstance& instance, const Trajectory& trajectory);

void to_json(nlohmann::json& j, const StateRecord& r);
void to_json(nlohmann::json& j, const Trajectory& t);

}  // namespace hbg
