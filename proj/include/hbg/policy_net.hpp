#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbg/autodiff.hpp"
#include "hbg/graphkit.hpp"

namespace hbg {

struct NetConfig {
    int layers = 3;
    int hidden = 16;
    /// Replace batch norm with per-row layer norm (batch-size-1 debugging).
    bool layer_norm = false;
    double bn_momentum = 0.1;

    bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

struct ParamTensor {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    bool operator==(const ParamTensor&) const = default;
};

/// Message-passing GNN with edge-logit head, flow head and log-partition scalar.
///
/// Layer l updates, with row-vector embeddings and mean aggregation over the
/// out-neighbours of node i:
///   h_i <- h_i + SiLU(BN(h_i W1 + mean_j sigmoid(e_ij) * (h_j W2)))
///   e_ij <- e_ij + SiLU(BN(e_ij W3 + h_i W4 + h_j W5))
/// Edge logits come from a two-layer SiLU MLP on the final e_ij. The flow head
/// maps each node embedding q to W2f ReLU(W1f q + b1f) + b2f, read as log F.
class PolicyNet {
public:
    PolicyNet() = default;
    explicit PolicyNet(const NetConfig& config, std::uint64_t seed = 0);

    /// Index of each named parameter inside params().
    struct Layout {
        int node_in_w, node_in_b, edge_in_w, edge_in_b;
        struct LayerIds {
            int w1, w2, w3, w4, w5;
            int bn_h_gamma, bn_h_beta, bn_e_gamma, bn_e_beta;
        };
        std::vector<LayerIds> layer;
        int head_w1, head_b1, head_w2, head_b2;
        int flow_w1, flow_b1, flow_w2, flow_b2;
        int log_z;
    };

    const NetConfig& config() const { return config_; }
    const Layout& layout() const { return layout_; }
    std::vector<ParamTensor>& params() { return params_; }
    const std::vector<ParamTensor>& params() const { return params_; }
    int param_count() const { return static_cast<int>(params_.size()); }
    ParamTensor& param(const std::string& name);
    const ParamTensor& param(const std::string& name) const;

    /// Running batch-norm statistics: [2l] for nodes, [2l+1] for edges.
    std::vector<ad::NormStats>& running_stats() { return running_; }
    const std::vector<ad::NormStats>& running_stats() const { return running_; }

    double log_z() const { return params_[static_cast<std::size_t>(layout_.log_z)].data[0]; }

    /// Blends batch statistics from a training forward into the running averages.
    void update_running_stats(const std::vector<ad::NormStats>& batch);

    bool operator==(const PolicyNet& other) const {
        return config_ == other.config_ && params_ == other.params_ && running_stats_equal(other);
    }

private:
    bool running_stats_equal(const PolicyNet& other) const;
    void add(const std::string& name, int rows, int cols, std::vector<double> data);

    NetConfig config_;
    Layout layout_{};
    std::vector<ParamTensor> params_;
    std::vector<ad::NormStats> running_;
};

/// Parameters bound as leaves of one tape (id i is params()[i]).
std::vector<ad::Var> bind_params(const PolicyNet& net, ad::Tape& tape);

struct GraphForward {
    ad::Var edge_logits;  // E x 1
    ad::Var node_embeds;  // N x D
    ad::Var node_flow;    // N x 1, flow head per node (log space)
    std::vector<ad::NormStats> batch_stats;
};

/// Differentiable forward pass; `training` selects batch statistics.
GraphForward gnn_forward(const PolicyNet& net, const std::vector<ad::Var>& params, const FeatureSet& features,
                         const SparseGraph& graph, bool training);

/// Logits for edges outside the sparse graph, from distance through the input projection and edge head.
ad::Var virtual_edge_logits(const PolicyNet& net, const std::vector<ad::Var>& params, const std::vector<double>& dists);

/// Plain-value policy outputs for decoding.
struct PolicyOutput {
    int hidden = 0;
    std::vector<double> edge_logits;
    std::vector<double> node_embeds;  // N x hidden
    std::vector<double> node_flow;    // N
};

PolicyOutput gnn_forward(const PolicyNet& net, const FeatureSet& features, const SparseGraph& graph, bool training);

/// Log flow of a state: mean flow-head output over the visited multiset.
double flow_value(const PolicyNet& net, const std::vector<int>& visited, const std::vector<double>& node_embeds);

double virtual_edge_logit(const PolicyNet& net, double dist);

nlohmann::json net_to_json(const PolicyNet& net);
PolicyNet net_from_json(const nlohmann::json& j);

/// Overwrites the parameters with `values` laid out as params() (for tests/optimizers).
void assign_flat(PolicyNet& net, const std::vector<double>& values);
std::vector<double> flatten(const PolicyNet& net);

}  // namespace hbg
