#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbg/balance.hpp"
#include "hbg/instances.hpp"
#include "hbg/policy_net.hpp"

namespace hbg {

enum class OptimizerKind { adamw, adam, sgd };

struct TrainConfig {
    ProblemKind kind = ProblemKind::CVRP;
    int n_nodes = 20;
    int capacity = 50;
    int epochs = 30;
    int instances_per_epoch = 8;
    /// Instances whose gradients are averaged into one optimizer step.
    int batch_size = 1;
    int h = 20;
    double lambda_start = 1.0;
    double lambda_end = 1.0;
    double tb_weight = 1.0;
    EnergySign energy_sign = EnergySign::centered;
    BackwardMode backward_mode = BackwardMode::closed_form_pb;
    double reward_beta = 20.0;
    double lr = 5e-4;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double weight_decay = 0.01;
    double grad_clip = 10.0;
    std::uint64_t seed = 0;
    NetConfig net;
    int k = 0;  // 0: default_k(|V|)
    int validation_instances = 8;
    int checkpoint_every = 0;  // 0: only the final checkpoint
    std::string checkpoint_dir;

    void validate() const;
    /// lambda_start + (lambda_end - lambda_start) * epoch / (epochs - 1)
    double lambda_at(int epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochMetrics {
    int epoch = 0;
    double mean_len_sampled = 0.0;
    double mean_len_greedy = 0.0;  // validation set, after this epoch's updates
    double tb = 0.0;
    double db = 0.0;
    double hybrid = 0.0;
    double log_z = 0.0;
    double seconds = 0.0;
};

struct TrainMetrics {
    double initial_greedy = 0.0;  // validation set, untrained network
    std::vector<EpochMetrics> epochs;

    /// Header plus one row per epoch; `with_time` false drops the wall-clock column.
    std::string csv(bool with_time = true) const;
};

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// One in-place update of the flat parameter vector.
void optimizer_step(OptimizerKind kind, std::vector<double>& params, const std::vector<double>& grads, double lr,
                    double weight_decay, OptimizerState& state, double beta1 = 0.9, double beta2 = 0.999,
                    double eps = 1e-8);

/// Rescales grads in place to global norm <= max_norm; returns the norm before clipping.
double clip_grad_norm(std::vector<double>& grads, double max_norm);

struct TrainResult {
    PolicyNet net;
    TrainMetrics metrics;
};

TrainResult train(const TrainConfig& config);

/// Per-instance loss pieces and flat gradient for the current parameters.
struct InstanceGradient {
    std::vector<double> grad;
    std::vector<ad::NormStats> batch_stats;
    double tb = 0.0;
    double db = 0.0;
    double hybrid = 0.0;
    double mean_length = 0.0;
};

InstanceGradient instance_gradient(const PolicyNet& net, const VrpInstance& instance, const TrainConfig& config,
                                   double lambda, const Rng& rng);

/// Fixed validation instances derived from config.seed.
std::vector<VrpInstance> validation_set(const TrainConfig& config);
double mean_greedy_length(const PolicyNet& net, const std::vector<VrpInstance>& instances, int k);

void save_checkpoint(const PolicyNet& net, const TrainConfig& config, const std::string& path);
struct Checkpoint {
    PolicyNet net;
    TrainConfig config;
};
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_text(const PolicyNet& net, const TrainConfig& config);
Checkpoint checkpoint_from_text(const std::string& text);

inline constexpr int kCheckpointVersion = 1;

}  // namespace hbg
