#pragma once

#include <vector>

#include "hbg/graphkit.hpp"
#include "hbg/policy_net.hpp"
#include "hbg/sampler.hpp"

namespace hbg {

struct AcoParams {
    double alpha = 1.0;   // pheromone exponent
    double beta_h = 2.0;  // heuristic exponent
    double rho = 0.1;     // evaporation rate
    double q = 1.0;       // deposit numerator
    double tau_min = 1e-3;
    double tau_max = 10.0;
    int elite_count = 5;
};

/// Pheromone and heuristic (1 / distance) per directed sparse edge.
struct PheromoneMap {
    std::vector<double> tau;
    std::vector<double> eta;
    AcoParams params;
};

/// Per-node softmax of the edge logits, clipped into [tau_min, tau_max].
PheromoneMap heuristic_to_pheromone(const PolicyOutput& output, const SparseGraph& graph, const AcoParams& params = {});
PheromoneMap uniform_pheromone(const SparseGraph& graph, double value, const AcoParams& params = {});

/// Ant a samples next nodes with weight tau^alpha * eta^beta_h from rng.stream(ant, a).
/// Virtual (fallback) edges use tau_min.
std::vector<Trajectory> ant_construct(const PheromoneMap& map, const VrpInstance& instance, const SparseGraph& graph,
                                      int n_ants, const Rng& rng, const DecodeRule& rule = {});

enum class LocalSearchMode { two_opt, two_opt_plus_relocate };

/// First-improvement descent (ascending i, then j). CVRP uses intra-route
/// 2-opt plus optional inter-route relocate; TSP uses 2-opt on the cycle.
/// The result never has a greater length; records carry zero log_pf.
Trajectory local_search(const Trajectory& trajectory, const VrpInstance& instance, LocalSearchMode mode);

/// tau <- (1 - rho) tau + sum over the elite_count shortest tours using e of q / length, then clip.
PheromoneMap pheromone_update(const PheromoneMap& map, const SparseGraph& graph, const std::vector<Trajectory>& tours,
                              int elite_count);

struct AcoOptions {
    AcoParams params;
    bool local_search = false;
    LocalSearchMode ls_mode = LocalSearchMode::two_opt_plus_relocate;
    bool update_pheromones = true;
    /// Ants sample only at the depot and act greedily at customers.
    bool depot_guided = false;
};

struct AcoResult {
    Trajectory best;
    std::vector<double> history;  // best-so-far length per iteration
};

AcoResult aco_solve(const PheromoneMap& initial, const VrpInstance& instance, const SparseGraph& graph, int iterations,
                    int n_ants, const Rng& rng, const AcoOptions& options = {});
AcoResult aco_solve(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph, int iterations,
                    int n_ants, const Rng& rng, const AcoOptions& options = {});

/// Nearest-neighbour construction over the complete graph (capacity-aware for CVRP), start at node 0 / depot.
Trajectory nearest_neighbor_tour(const VrpInstance& instance);

}  // namespace hbg
