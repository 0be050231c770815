#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbg/acosearch.hpp"
#include "hbg/balance.hpp"
#include "hbg/trainer.hpp"

namespace hbg {

struct Dataset {
    std::string name;
    std::vector<VrpInstance> instances;
};

/// Instance i uses seed stream(instance, i) of Rng(seed); names are <prefix><n>_<i>.
Dataset generate_dataset(ProblemKind kind, int n, int count, std::uint64_t seed, int capacity = 50);
nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Reference objective per instance name, with where it came from.
struct BaselineSolutions {
    std::string provenance;
    std::map<std::string, double> objective;
};

inline constexpr const char* kBuiltinBaselineLabel = "builtin:nearest_neighbor+two_opt";

/// Nearest-neighbour construction followed by 2-opt local search.
BaselineSolutions builtin_baseline(const Dataset& d);
BaselineSolutions baselines_from_json(const nlohmann::json& j, const std::string& provenance);
nlohmann::json baselines_to_json(const BaselineSolutions& b);

/// 100 * (objective - reference) / reference
double gap_percent(double objective, double reference);

enum class DecodeMode { sample, greedy, depot_guided, aco, aco_local_search };
DecodeMode decode_mode_from_string(const std::string& s);
std::string to_string(DecodeMode m);

struct EvalOptions {
    DecodeMode mode = DecodeMode::greedy;
    std::uint64_t seed = 0;
    int samples = 20;  // rollouts per instance for sample / depot_guided (best kept)
    int aco_iterations = 10;
    int n_ants = 20;
    AcoParams aco;
    int k = 0;  // 0: default_k(|V|)
    std::string method;  // row label; defaults to the mode name
};

struct SolvedInstance {
    std::string instance_id;
    int size = 0;
    double objective = 0.0;
    double seconds = 0.0;
    std::vector<int> route;
};

struct EvalRow {
    std::string method;
    int size = 0;
    std::string instance_id;
    double objective = 0.0;
    double seconds = 0.0;
    double ref = 0.0;
    double gap_pct = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct EvalSummary {
    std::string method;
    int size = 0;
    int count = 0;
    double mean_objective = 0.0;
    double mean_seconds = 0.0;
    double mean_gap_pct = 0.0;
};

struct EvalReport {
    std::string reference;  // provenance of the reference objectives
    std::vector<EvalRow> rows;

    /// Rows grouped by (method, size), gap averaged per instance; sorted by method then size.
    std::vector<EvalSummary> summary() const;
    /// method,size,instance_id,objective,seconds,ref,gap_pct,seed,config_hash
    std::string csv(bool with_time = true) const;
    void append(const EvalReport& other);
};

/// Gap rows from already-solved instances; a missing baseline is an error.
EvalReport evaluate(const std::vector<SolvedInstance>& solved, const BaselineSolutions& baselines,
                    const std::string& method, std::uint64_t seed, const std::string& config_hash);

SolvedInstance solve_instance(const PolicyNet& net, const VrpInstance& instance, const EvalOptions& options);
EvalReport evaluate(const PolicyNet& net, const Dataset& dataset, const EvalOptions& options,
                    const BaselineSolutions& baselines, const std::string& config_hash = "");

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

/// A reported-but-not-enforced expectation (ordering checks from the ablations).
struct FlaggedExpectation {
    std::string description;
    bool holds = false;
};

struct AblationReport {
    EvalReport report;
    std::vector<FlaggedExpectation> expectations;
};

/// Trains DB-only (tb weight 0, lambda 1), TB-only (lambda 0) and HB (lambda 1) models from one seed.
struct BalanceVariant {
    std::string label;
    double tb_weight;
    double lambda;
};
std::vector<BalanceVariant> balance_variants();
AblationReport ablate_balance(const TrainConfig& config, const Dataset& dataset, const EvalOptions& options,
                              const BaselineSolutions& baselines);

struct DecodeVariant {
    std::string label;
    Choice at_depot;
    Choice at_customer;
};
/// DS+CG, DS+CS, DG+CG, DG+CS
std::vector<DecodeVariant> decode_variants();
/// One row per (variant, seed, instance); the best of options.samples rollouts is reported.
AblationReport ablate_decoding(const PolicyNet& net, const Dataset& dataset, const std::vector<std::uint64_t>& seeds,
                               const EvalOptions& options, const BaselineSolutions& baselines);
/// Per method: variance over seeds of the seed-mean objective.
std::map<std::string, double> cross_seed_variance(const EvalReport& report);

enum class GradLoss { tb, db_step, db_trajectory, hybrid };
std::string to_string(GradLoss g);

struct GradCheckResult {
    int checked = 0;
    int skipped = 0;  // kinks: one-sided differences disagree
    double max_rel_error = 0.0;
    std::string worst_param;
};

/// Central differences against the tape gradient on fixed trajectories.
GradCheckResult gradient_check(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph,
                               const std::vector<Trajectory>& trajectories, const std::vector<double>& log_rewards,
                               GradLoss loss, int max_coords, const Rng& rng, double eps = 1e-4);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerificationOptions {
    /// Backward step probability under test (fault injection hook).
    std::function<double(int a, int j, bool at_depot)> backward_prob;
    int feasibility_samples = 2000;
    int feasibility_guided = 200;
    int feasibility_aco = 200;
    std::uint64_t seed = 0;
};

struct VerificationRun {
    std::vector<CheckResult> checks;
    std::string discrepancy_table;  // informational

    bool passed() const;
    std::string text() const;
};

VerificationRun run_verification(const VerificationOptions& options = {});

}  // namespace hbg
