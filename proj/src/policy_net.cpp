#include "hbg/policy_net.hpp"

#include <cmath>
#include <string>

#include "hbg/errors.hpp"
#include "hbg/rng.hpp"

namespace hbg {

void to_json(nlohmann::json& j, const NetConfig& c) {
    j = nlohmann::json{{"layers", c.layers}, {"hidden", c.hidden}, {"layer_norm", c.layer_norm}, {"bn_momentum", c.bn_momentum}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
    c.layers = j.at("layers").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.layer_norm = j.at("layer_norm").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
}

void PolicyNet::add(const std::string& name, int rows, int cols, std::vector<double> data) {
    params_.push_back({name, rows, cols, std::move(data)});
}

PolicyNet::PolicyNet(const NetConfig& config, std::uint64_t seed) : config_(config) {
    if (config.layers < 1 || config.hidden < 1) throw ParameterError("PolicyNet: layers and hidden must be positive");
    const int d = config.hidden;
    Rng rng = Rng(seed).stream(StreamPurpose::init, 0);

    auto weight = [&](const std::string& name, int rows, int cols) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        std::vector<double> w(static_cast<std::size_t>(rows) * cols);
        for (double& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
        add(name, rows, cols, std::move(w));
        return param_count() - 1;
    };
    auto filled = [&](const std::string& name, int rows, int cols, double value) {
        add(name, rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, value));
        return param_count() - 1;
    };

    layout_.node_in_w = weight("node_in.w", kNodeFeatureDim, d);
    layout_.node_in_b = filled("node_in.b", 1, d, 0.0);
    layout_.edge_in_w = weight("edge_in.w", kEdgeFeatureDim, d);
    layout_.edge_in_b = filled("edge_in.b", 1, d, 0.0);
    for (int l = 0; l < config.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Layout::LayerIds ids{};
        ids.w1 = weight(p + "w1", d, d);
        ids.w2 = weight(p + "w2", d, d);
        ids.w3 = weight(p + "w3", d, d);
        ids.w4 = weight(p + "w4", d, d);
        ids.w5 = weight(p + "w5", d, d);
        ids.bn_h_gamma = filled(p + "bn_h.gamma", 1, d, 1.0);
        ids.bn_h_beta = filled(p + "bn_h.beta", 1, d, 0.0);
        ids.bn_e_gamma = filled(p + "bn_e.gamma", 1, d, 1.0);
        ids.bn_e_beta = filled(p + "bn_e.beta", 1, d, 0.0);
        layout_.layer.push_back(ids);
        for (int k = 0; k < 2; ++k)
            running_.push_back({std::vector<double>(static_cast<std::size_t>(d), 0.0),
                                std::vector<double>(static_cast<std::size_t>(d), 1.0)});
    }
    layout_.head_w1 = weight("edge_head.w1", d, d);
    layout_.head_b1 = filled("edge_head.b1", 1, d, 0.0);
    layout_.head_w2 = weight("edge_head.w2", d, 1);
    layout_.head_b2 = filled("edge_head.b2", 1, 1, 0.0);
    layout_.flow_w1 = weight("flow_head.w1", d, d);
    layout_.flow_b1 = filled("flow_head.b1", 1, d, 0.0);
    layout_.flow_w2 = weight("flow_head.w2", d, 1);
    layout_.flow_b2 = filled("flow_head.b2", 1, 1, 0.0);
    layout_.log_z = filled("log_z", 1, 1, 0.0);
}

ParamTensor& PolicyNet::param(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw ParameterError("no parameter named " + name);
}

const ParamTensor& PolicyNet::param(const std::string& name) const {
    return const_cast<PolicyNet*>(this)->param(name);
}

void PolicyNet::update_running_stats(const std::vector<ad::NormStats>& batch) {
    if (config_.layer_norm || batch.empty()) return;
    if (batch.size() != running_.size()) throw ShapeError("update_running_stats: layer count mismatch");
    const double m = config_.bn_momentum;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        for (std::size_t c = 0; c < running_[s].mean.size(); ++c) {
            running_[s].mean[c] = (1.0 - m) * running_[s].mean[c] + m * batch[s].mean[c];
            running_[s].var[c] = (1.0 - m) * running_[s].var[c] + m * batch[s].var[c];
        }
    }
}

bool PolicyNet::running_stats_equal(const PolicyNet& other) const {
    if (running_.size() != other.running_.size()) return false;
    for (std::size_t i = 0; i < running_.size(); ++i)
        if (running_[i].mean != other.running_[i].mean || running_[i].var != other.running_[i].var) return false;
    return true;
}

std::vector<ad::Var> bind_params(const PolicyNet& net, ad::Tape& tape) {
    std::vector<ad::Var> out;
    out.reserve(net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        const auto& p = net.params()[i];
        out.push_back(tape.param(p.rows, p.cols, p.data, static_cast<int>(i)));
    }
    return out;
}

namespace {

using ad::Var;

Var linear(Var x, Var w, Var b) { return ad::add_row(ad::matmul(x, w), b); }

void require_finite(Var v, int layer, const char* what) {
    for (double x : v.value())
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite ") + what + " activation in GNN layer " + std::to_string(layer));
}

Var edge_head(const PolicyNet& net, const std::vector<Var>& p, Var e) {
    const auto& L = net.layout();
    Var hidden = ad::silu(linear(e, p[L.head_w1], p[L.head_b1]));
    return linear(hidden, p[L.head_w2], p[L.head_b2]);
}

}  // namespace

GraphForward gnn_forward(const PolicyNet& net, const std::vector<Var>& p, const FeatureSet& features,
                         const SparseGraph& graph, bool training) {
    if (features.node_count != graph.n || features.edge_count != graph.edge_count())
        throw ShapeError("gnn_forward: features do not match graph");
    if (p.size() != net.params().size()) throw ShapeError("gnn_forward: parameter binding mismatch");
    ad::Tape& tape = *p.front().tape;
    const auto& L = net.layout();
    const int n = graph.n;
    const int e_count = graph.edge_count();

    Var x_nodes = tape.constant(n, kNodeFeatureDim, features.node_feats);
    Var x_edges = tape.constant(e_count, kEdgeFeatureDim, features.edge_feats);
    Var h = linear(x_nodes, p[L.node_in_w], p[L.node_in_b]);
    Var e = linear(x_edges, p[L.edge_in_w], p[L.edge_in_b]);

    const ad::NormMode mode =
        net.config().layer_norm ? ad::NormMode::layer : (training ? ad::NormMode::batch_train : ad::NormMode::batch_eval);

    GraphForward out;
    for (int l = 0; l < net.config().layers; ++l) {
        const auto& ids = L.layer[static_cast<std::size_t>(l)];
        const auto& run_h = net.running_stats()[static_cast<std::size_t>(2 * l)];
        const auto& run_e = net.running_stats()[static_cast<std::size_t>(2 * l + 1)];

        Var hw2 = ad::gather_rows(ad::matmul(h, p[ids.w2]), graph.edge_dst);
        Var msg = ad::mul(ad::sigmoid(e), hw2);
        Var agg = ad::segment_mean(msg, graph.offsets);
        ad::NormStats stats_h, stats_e;
        Var h_pre = ad::add(ad::matmul(h, p[ids.w1]), agg);
        Var h_next = ad::add(h, ad::silu(ad::normalize(h_pre, p[ids.bn_h_gamma], p[ids.bn_h_beta], mode, &run_h, &stats_h)));

        Var e_pre = ad::add(ad::matmul(e, p[ids.w3]),
                            ad::add(ad::gather_rows(ad::matmul(h, p[ids.w4]), graph.edge_src),
                                    ad::gather_rows(ad::matmul(h, p[ids.w5]), graph.edge_dst)));
        Var e_next = ad::add(e, ad::silu(ad::normalize(e_pre, p[ids.bn_e_gamma], p[ids.bn_e_beta], mode, &run_e, &stats_e)));

        require_finite(h_next, l, "node");
        require_finite(e_next, l, "edge");
        h = h_next;
        e = e_next;
        if (mode == ad::NormMode::batch_train) {
            out.batch_stats.push_back(std::move(stats_h));
            out.batch_stats.push_back(std::move(stats_e));
        }
    }

    out.node_embeds = h;
    out.edge_logits = edge_head(net, p, e);
    Var flow_hidden = ad::relu(linear(h, p[L.flow_w1], p[L.flow_b1]));
    out.node_flow = linear(flow_hidden, p[L.flow_w2], p[L.flow_b2]);
    return out;
}

Var virtual_edge_logits(const PolicyNet& net, const std::vector<Var>& p, const std::vector<double>& dists) {
    ad::Tape& tape = *p.front().tape;
    const auto& L = net.layout();
    Var x = tape.constant(static_cast<int>(dists.size()), kEdgeFeatureDim, dists);
    return edge_head(net, p, linear(x, p[L.edge_in_w], p[L.edge_in_b]));
}

PolicyOutput gnn_forward(const PolicyNet& net, const FeatureSet& features, const SparseGraph& graph, bool training) {
    ad::Tape tape;
    auto p = bind_params(net, tape);
    GraphForward f = gnn_forward(net, p, features, graph, training);
    PolicyOutput out;
    out.hidden = net.config().hidden;
    out.edge_logits.assign(f.edge_logits.value().begin(), f.edge_logits.value().end());
    out.node_embeds.assign(f.node_embeds.value().begin(), f.node_embeds.value().end());
    out.node_flow.assign(f.node_flow.value().begin(), f.node_flow.value().end());
    return out;
}

double flow_value(const PolicyNet& net, const std::vector<int>& visited, const std::vector<double>& node_embeds) {
    if (visited.empty()) throw ParameterError("flow_value: empty state");
    const int d = net.config().hidden;
    const auto& L = net.layout();
    const auto& w1 = net.params()[static_cast<std::size_t>(L.flow_w1)].data;
    const auto& b1 = net.params()[static_cast<std::size_t>(L.flow_b1)].data;
    const auto& w2 = net.params()[static_cast<std::size_t>(L.flow_w2)].data;
    const double b2 = net.params()[static_cast<std::size_t>(L.flow_b2)].data[0];
    const int rows = static_cast<int>(node_embeds.size()) / d;

    double total = 0.0;
    std::vector<double> hidden(static_cast<std::size_t>(d));
    for (int node : visited) {
        if (node < 0 || node >= rows) throw IndexError("flow_value: node index out of range");
        const double* q = node_embeds.data() + static_cast<std::ptrdiff_t>(node) * d;
        // Same summation order as the tape's matmul kernel.
        for (int c = 0; c < d; ++c) hidden[static_cast<std::size_t>(c)] = 0.0;
        for (int k = 0; k < d; ++k)
            for (int c = 0; c < d; ++c) hidden[static_cast<std::size_t>(c)] += q[k] * w1[static_cast<std::size_t>(k) * d + c];
        double f = 0.0;
        for (int c = 0; c < d; ++c) {
            const double a = hidden[static_cast<std::size_t>(c)] + b1[static_cast<std::size_t>(c)];
            f += (a > 0.0 ? a : 0.0) * w2[static_cast<std::size_t>(c)];
        }
        total += f + b2;
    }
    return total / static_cast<double>(visited.size());
}

double virtual_edge_logit(const PolicyNet& net, double dist) {
    ad::Tape tape;
    auto p = bind_params(net, tape);
    return virtual_edge_logits(net, p, {dist}).item();
}

nlohmann::json net_to_json(const PolicyNet& net) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : net.params())
        params.push_back({{"name", p.name}, {"shape", {p.rows, p.cols}}, {"data", p.data}});
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& s : net.running_stats()) stats.push_back({{"mean", s.mean}, {"var", s.var}});
    return {{"config", net.config()}, {"params", params}, {"norm_stats", stats}, {"log_z", net.log_z()}};
}

PolicyNet net_from_json(const nlohmann::json& j) {
    PolicyNet net(j.at("config").get<NetConfig>());
    const auto& params = j.at("params");
    if (params.size() != net.params().size())
        throw ShapeError("checkpoint has " + std::to_string(params.size()) + " tensors, network expects " +
                         std::to_string(net.params().size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& dst = net.params()[i];
        const auto& src = params[i];
        const std::string name = src.at("name").get<std::string>();
        const int rows = src.at("shape").at(0).get<int>();
        const int cols = src.at("shape").at(1).get<int>();
        if (name != dst.name || rows != dst.rows || cols != dst.cols)
            throw ShapeError("checkpoint tensor '" + name + "' shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " incompatible with '" + dst.name + "' " + std::to_string(dst.rows) + "x" +
                             std::to_string(dst.cols));
        auto data = src.at("data").get<std::vector<double>>();
        if (data.size() != dst.data.size()) throw ShapeError("checkpoint tensor '" + name + "' payload size mismatch");
        dst.data = std::move(data);
    }
    const auto& stats = j.at("norm_stats");
    if (stats.size() != net.running_stats().size()) throw ShapeError("checkpoint norm statistics count mismatch");
    for (std::size_t i = 0; i < stats.size(); ++i) {
        auto mean = stats[i].at("mean").get<std::vector<double>>();
        auto var = stats[i].at("var").get<std::vector<double>>();
        if (mean.size() != net.running_stats()[i].mean.size() || var.size() != mean.size())
            throw ShapeError("checkpoint norm statistics " + std::to_string(i) + " size mismatch");
        net.running_stats()[i] = {std::move(mean), std::move(var)};
    }
    if (j.at("log_z").get<double>() != net.log_z()) throw ConsistencyError("checkpoint log_z field disagrees with params");
    return net;
}

void assign_flat(PolicyNet& net, const std::vector<double>& values) {
    std::size_t k = 0;
    for (auto& p : net.params())
        for (double& v : p.data) {
            if (k >= values.size()) throw ShapeError("assign_flat: too few values");
            v = values[k++];
        }
    if (k != values.size()) throw ShapeError("assign_flat: too many values");
}

std::vector<double> flatten(const PolicyNet& net) {
    std::vector<double> out;
    for (const auto& p : net.params()) out.insert(out.end(), p.data.begin(), p.data.end());
    return out;
}

}  // namespace hbg
