#include "hbg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hbg/errors.hpp"
#include "hbg/graphkit.hpp"
#include "hbg/sampler.hpp"

namespace hbg {

NLOHMANN_JSON_SERIALIZE_ENUM(ProblemKind, {{ProblemKind::CVRP, "cvrp"}, {ProblemKind::TSP, "tsp"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind,
                             {{OptimizerKind::adamw, "adamw"}, {OptimizerKind::adam, "adam"}, {OptimizerKind::sgd, "sgd"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EnergySign, {{EnergySign::centered, "centered"}, {EnergySign::negated, "negated"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BackwardMode, {{BackwardMode::closed_form_pb, "closed_form_pb"},
                                            {BackwardMode::uniform_pb_one, "uniform_pb_one"}})

void TrainConfig::validate() const {
    if (n_nodes < 2) throw ParameterError("n_nodes must be >= 2");
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (instances_per_epoch < 1) throw ParameterError("instances_per_epoch must be >= 1");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (h < 1) throw ParameterError("h must be >= 1");
    if (lambda_start < 0.0 || lambda_end < 0.0) throw ParameterError("lambda must be >= 0");
    if (tb_weight < 0.0) throw ParameterError("tb_weight must be >= 0");
    if (!(lr > 0.0)) throw ParameterError("lr must be > 0");
    if (weight_decay < 0.0) throw ParameterError("weight_decay must be >= 0");
    if (!(grad_clip > 0.0)) throw ParameterError("grad_clip must be > 0");
    if (validation_instances < 1) throw ParameterError("validation_instances must be >= 1");
    if (kind == ProblemKind::CVRP && capacity < 1) throw ParameterError("capacity must be >= 1");
}

double TrainConfig::lambda_at(int epoch) const {
    if (epochs == 1) return lambda_start;
    if (epoch == epochs - 1) return lambda_end;
    return lambda_start + (lambda_end - lambda_start) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"kind", c.kind},
         {"n_nodes", c.n_nodes},
         {"capacity", c.capacity},
         {"epochs", c.epochs},
         {"instances_per_epoch", c.instances_per_epoch},
         {"batch_size", c.batch_size},
         {"h", c.h},
         {"lambda_start", c.lambda_start},
         {"lambda_end", c.lambda_end},
         {"tb_weight", c.tb_weight},
         {"energy_sign", c.energy_sign},
         {"backward_mode", c.backward_mode},
         {"reward_beta", c.reward_beta},
         {"lr", c.lr},
         {"optimizer", c.optimizer},
         {"weight_decay", c.weight_decay},
         {"grad_clip", c.grad_clip},
         {"seed", c.seed},
         {"net", c.net},
         {"k", c.k},
         {"validation_instances", c.validation_instances},
         {"checkpoint_every", c.checkpoint_every},
         {"checkpoint_dir", c.checkpoint_dir}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.kind = j.value("kind", d.kind);
    c.n_nodes = j.value("n_nodes", d.n_nodes);
    c.capacity = j.value("capacity", d.capacity);
    c.epochs = j.value("epochs", d.epochs);
    c.instances_per_epoch = j.value("instances_per_epoch", d.instances_per_epoch);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.h = j.value("h", d.h);
    c.lambda_start = j.value("lambda_start", d.lambda_start);
    c.lambda_end = j.value("lambda_end", d.lambda_end);
    c.tb_weight = j.value("tb_weight", d.tb_weight);
    c.energy_sign = j.value("energy_sign", d.energy_sign);
    c.backward_mode = j.value("backward_mode", d.backward_mode);
    c.reward_beta = j.value("reward_beta", d.reward_beta);
    c.lr = j.value("lr", d.lr);
    c.optimizer = j.value("optimizer", d.optimizer);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.grad_clip = j.value("grad_clip", d.grad_clip);
    c.seed = j.value("seed", d.seed);
    c.net = j.value("net", d.net);
    c.k = j.value("k", d.k);
    c.validation_instances = j.value("validation_instances", d.validation_instances);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
}

std::string TrainMetrics::csv(bool with_time) const {
    std::ostringstream os;
    os << "epoch,mean_len_sampled,mean_len_greedy,tb,db,hybrid,logZ" << (with_time ? ",seconds" : "") << "\n";
    char buf[512];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", e.epoch, e.mean_len_sampled,
                      e.mean_len_greedy, e.tb, e.db, e.hybrid, e.log_z);
        os << buf;
        if (with_time) {
            std::snprintf(buf, sizeof buf, ",%.3f", e.seconds);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

void optimizer_step(OptimizerKind kind, std::vector<double>& params, const std::vector<double>& grads, double lr,
                    double weight_decay, OptimizerState& state, double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) throw ShapeError("optimizer_step: gradient size mismatch");
    const std::size_t n = params.size();
    if (kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < n; ++i) params[i] -= lr * (grads[i] + weight_decay * params[i]);
        return;
    }
    if (state.m.size() != n) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        double g = grads[i];
        if (kind == OptimizerKind::adam) g += weight_decay * params[i];
        else params[i] *= 1.0 - lr * weight_decay;
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double clip_grad_norm(std::vector<double>& grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (double& g : grads) g *= s;
    }
    return norm;
}

namespace {

VrpInstance make_instance(const TrainConfig& c, std::uint64_t seed) {
    return c.kind == ProblemKind::CVRP ? generate_cvrp(c.n_nodes, seed, c.capacity) : generate_tsp(c.n_nodes, seed);
}

int graph_k(const TrainConfig& c, const VrpInstance& inst) { return c.k > 0 ? c.k : default_k(inst.size()); }

std::vector<double> values(ad::Var v) { return {v.value().begin(), v.value().end()}; }

}  // namespace

InstanceGradient instance_gradient(const PolicyNet& net, const VrpInstance& instance, const TrainConfig& config,
                                   double lambda, const Rng& rng) {
    const SparseGraph graph = knn_sparsify(instance, graph_k(config, instance));
    const FeatureSet features = build_features(instance, graph);

    ad::Tape tape;
    const auto params = bind_params(net, tape);
    GraphForward fwd = gnn_forward(net, params, features, graph, true);

    // Rollouts use the same (training-mode) logits the objective differentiates.
    PolicyOutput out;
    out.hidden = net.config().hidden;
    out.edge_logits = values(fwd.edge_logits);
    out.node_embeds = values(fwd.node_embeds);
    out.node_flow = values(fwd.node_flow);
    auto trajs = sample_trajectories(instance, graph, policy_scorer(net, out, instance), config.h, rng);

    std::vector<double> lengths;
    lengths.reserve(trajs.size());
    for (auto& t : trajs) {
        lengths.push_back(t.length);
        fill_flows(t, out.node_flow);
    }
    apply_energies(trajs, energy_table(trajs, config.energy_sign));
    const auto log_r = log_reward_transform(lengths, config.reward_beta);

    ObjectiveOptions opt;
    opt.lambda = lambda;
    opt.tb_weight = config.tb_weight;
    opt.mode = config.backward_mode;
    ObjectiveTerms terms = build_objective(net, params, fwd, instance, graph, trajs, log_r, opt);

    InstanceGradient g;
    g.tb = terms.tb.item();
    g.db = terms.db.item();
    g.hybrid = terms.hybrid.item();
    double total = 0.0;
    for (double l : lengths) total += l;
    g.mean_length = total / static_cast<double>(lengths.size());
    g.batch_stats = std::move(fwd.batch_stats);
    if (!std::isfinite(g.hybrid)) return g;

    tape.backward(terms.hybrid);
    const auto table = tape.param_grads(net.param_count());
    for (const auto& t : table) g.grad.insert(g.grad.end(), t.begin(), t.end());
    return g;
}

std::vector<VrpInstance> validation_set(const TrainConfig& config) {
    const Rng base = Rng(config.seed).stream(StreamPurpose::validation, 0);
    std::vector<VrpInstance> out;
    for (int i = 0; i < config.validation_instances; ++i) {
        Rng s = base.stream(StreamPurpose::instance, static_cast<std::uint64_t>(i));
        out.push_back(make_instance(config, s.next_u64()));
    }
    return out;
}

double mean_greedy_length(const PolicyNet& net, const std::vector<VrpInstance>& instances, int k) {
    std::vector<double> lens(instances.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const SparseGraph g = knn_sparsify(inst, k > 0 ? k : default_k(inst.size()));
        lens[i] = greedy_decode(net, inst, g).length;
    }
    double total = 0.0;
    for (double l : lens) total += l;
    return total / static_cast<double>(lens.size());
}

namespace {

[[noreturn]] void abort_nonfinite(const PolicyNet& net, const TrainConfig& config, int epoch, int instance,
                                  std::uint64_t instance_seed, const InstanceGradient& g) {
    std::ostringstream msg;
    msg << "non-finite loss at epoch " << epoch << ", instance " << instance << " (instance seed " << instance_seed
        << "): tb=" << g.tb << " db=" << g.db << " hybrid=" << g.hybrid;
    if (!config.checkpoint_dir.empty()) {
        const std::string path = config.checkpoint_dir + "/nonfinite_dump.json";
        nlohmann::json dump = {{"epoch", epoch},
                               {"instance", instance},
                               {"instance_seed", instance_seed},
                               {"tb", g.tb},
                               {"db", g.db},
                               {"net", net_to_json(net)},
                               {"config", config}};
        std::ofstream(path) << dump.dump(1);
        msg << "; parameters dumped to " << path;
    }
    throw NumericError(msg.str());
}

}  // namespace

TrainResult train(const TrainConfig& config) {
    config.validate();
    if (config.kind == ProblemKind::CVRP && config.n_nodes <= 0) throw ParameterError("n_nodes");
    if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);
    TrainResult result;
    result.net = PolicyNet(config.net, Rng(config.seed).stream(StreamPurpose::init, 0).next_u64());
    PolicyNet& net = result.net;

    const auto validation = validation_set(config);
    result.metrics.initial_greedy = mean_greedy_length(net, validation, config.k);

    std::vector<double> flat = flatten(net);
    OptimizerState opt_state;
    const Rng root(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const Rng epoch_rng = root.stream(StreamPurpose::epoch, static_cast<std::uint64_t>(epoch));
        const double lambda = config.lambda_at(epoch);
        EpochMetrics em;
        em.epoch = epoch;

        for (int b0 = 0; b0 < config.instances_per_epoch; b0 += config.batch_size) {
            const int b1 = std::min(config.instances_per_epoch, b0 + config.batch_size);
            const int count = b1 - b0;
            std::vector<InstanceGradient> grads(static_cast<std::size_t>(count));
            std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i) {
                Rng s = epoch_rng.stream(StreamPurpose::instance, static_cast<std::uint64_t>(b0 + i));
                seeds[static_cast<std::size_t>(i)] = s.next_u64();
            }
#pragma omp parallel for schedule(dynamic)
            for (int i = 0; i < count; ++i) {
                const auto inst = make_instance(config, seeds[static_cast<std::size_t>(i)]);
                grads[static_cast<std::size_t>(i)] = instance_gradient(
                    net, inst, config, lambda,
                    epoch_rng.stream(StreamPurpose::trajectory, static_cast<std::uint64_t>(b0 + i)));
            }

            std::vector<double> merged(flat.size(), 0.0);
            for (int i = 0; i < count; ++i) {
                const auto& g = grads[static_cast<std::size_t>(i)];
                if (!std::isfinite(g.hybrid) || g.grad.size() != flat.size())
                    abort_nonfinite(net, config, epoch, b0 + i, seeds[static_cast<std::size_t>(i)], g);
                for (std::size_t p = 0; p < merged.size(); ++p) merged[p] += g.grad[p];
                em.tb += g.tb;
                em.db += g.db;
                em.hybrid += g.hybrid;
                em.mean_len_sampled += g.mean_length;
            }
            for (double& v : merged) v /= static_cast<double>(count);
            clip_grad_norm(merged, config.grad_clip);
            optimizer_step(config.optimizer, flat, merged, config.lr, config.weight_decay, opt_state);
            for (double v : flat)
                if (!std::isfinite(v)) throw NumericError("non-finite parameter after optimizer step at epoch " + std::to_string(epoch));
            assign_flat(net, flat);
            for (const auto& g : grads) net.update_running_stats(g.batch_stats);
        }

        const double n = static_cast<double>(config.instances_per_epoch);
        em.tb /= n;
        em.db /= n;
        em.hybrid /= n;
        em.mean_len_sampled /= n;
        em.mean_len_greedy = mean_greedy_length(net, validation, config.k);
        em.log_z = net.log_z();
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.epochs.push_back(em);

        const bool last = epoch + 1 == config.epochs;
        if (!config.checkpoint_dir.empty() &&
            (last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0))) {
            save_checkpoint(net, config, config.checkpoint_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".json");
            if (last) save_checkpoint(net, config, config.checkpoint_dir + "/checkpoint_final.json");
        }
    }
    return result;
}

std::string checkpoint_text(const PolicyNet& net, const TrainConfig& config) {
    nlohmann::json j = {{"version", kCheckpointVersion}, {"config", config}, {"net", net_to_json(net)}};
    return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (!j.contains("version") || j["version"] != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version (expected " + std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.config = j.at("config").get<TrainConfig>();
    c.net = net_from_json(j.at("net"));
    return c;
}

void save_checkpoint(const PolicyNet& net, const TrainConfig& config, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint: " + path);
    f << checkpoint_text(net, config);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_text(ss.str());
}

}  // namespace hbg
