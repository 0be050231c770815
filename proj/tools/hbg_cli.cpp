#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hbg/errors.hpp"
#include "hbg/workbench.hpp"

using namespace hbg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

VrpInstance load_instance(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return nlohmann::json::parse(text).get<VrpInstance>();
    return parse_tsplib(text);
}

ProblemKind kind_of(const std::string& s) {
    if (s == "cvrp") return ProblemKind::CVRP;
    if (s == "tsp") return ProblemKind::TSP;
    throw ParameterError("unknown problem kind: " + s);
}

struct TrainFlags {
    std::string kind = "cvrp";
    std::string optimizer = "adamw";
    std::string energy_sign = "centered";
    TrainConfig c;

    void add(CLI::App* app) {
        app->add_option("--kind", kind, "cvrp or tsp")->check(CLI::IsMember({"cvrp", "tsp"}));
        app->add_option("--n", c.n_nodes, "customers (CVRP) or cities (TSP)");
        app->add_option("--capacity", c.capacity);
        app->add_option("--epochs", c.epochs);
        app->add_option("--instances", c.instances_per_epoch, "instances per epoch");
        app->add_option("--batch-size", c.batch_size, "instances per optimizer step");
        app->add_option("--rollouts", c.h, "rollouts per instance (h)");
        app->add_option("--lambda-start", c.lambda_start);
        app->add_option("--lambda-end", c.lambda_end);
        app->add_option("--tb-weight", c.tb_weight);
        app->add_option("--energy-sign", energy_sign)->check(CLI::IsMember({"centered", "negated"}));
        app->add_option("--beta", c.reward_beta, "reward transform temperature");
        app->add_option("--lr", c.lr);
        app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adamw", "adam", "sgd"}));
        app->add_option("--weight-decay", c.weight_decay);
        app->add_option("--grad-clip", c.grad_clip);
        app->add_option("--layers", c.net.layers);
        app->add_option("--hidden", c.net.hidden);
        app->add_option("--k", c.k, "neighbours per node (0: max(5, |V|/5))");
        app->add_option("--validation", c.validation_instances, "validation instances for greedy length");
        app->add_option("--checkpoint-dir", c.checkpoint_dir);
        app->add_option("--checkpoint-every", c.checkpoint_every);
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig out = c;
        out.seed = seed;
        out.kind = kind_of(kind);
        out.optimizer = optimizer == "adam" ? OptimizerKind::adam : optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adamw;
        out.energy_sign = energy_sign == "negated" ? EnergySign::negated : EnergySign::centered;
        return out;
    }
};

struct EvalFlags {
    std::string mode = "greedy";
    EvalOptions o;

    void add(CLI::App* app) {
        app->add_option("--mode", mode)->check(CLI::IsMember({"sample", "greedy", "depot_guided", "aco", "aco_local_search"}));
        app->add_option("--samples", o.samples, "rollouts per instance (sample, depot_guided)");
        app->add_option("--iterations", o.aco_iterations, "ACO iterations");
        app->add_option("--ants", o.n_ants);
        app->add_option("--k", o.k);
    }

    EvalOptions options(std::uint64_t seed) const {
        EvalOptions out = o;
        out.mode = decode_mode_from_string(mode);
        out.seed = seed;
        return out;
    }
};

PolicyNet net_or_untrained(const std::string& checkpoint, std::uint64_t seed) {
    if (!checkpoint.empty()) return load_checkpoint(checkpoint).net;
    std::cerr << "note: no --checkpoint given, using an untrained network (seed " << seed << ")\n";
    return PolicyNet(NetConfig{}, seed);
}

BaselineSolutions baselines_for(const Dataset& d, const std::string& path) {
    if (path.empty()) return builtin_baseline(d);
    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path);
    return baselines_from_json(nlohmann::json::parse(f), path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid-balance GFlowNet routing workbench"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_option("--seed", seed, "experiment seed")->capture_default_str();
    app.add_option("--threads", threads,
                   "OpenMP threads (0: runtime default). Results per instance do not depend on it; wall times do");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a random dataset (JSON)");
    std::string gen_kind = "cvrp", gen_out;
    int gen_n = 20, gen_count = 16, gen_cap = 50;
    gen->add_option("--kind", gen_kind)->check(CLI::IsMember({"cvrp", "tsp"}));
    gen->add_option("--n", gen_n);
    gen->add_option("--count", gen_count);
    gen->add_option("--capacity", gen_cap);
    gen->add_option("--out", gen_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "train a policy");
    TrainFlags train_flags;
    train_flags.add(tr);
    std::string metrics_out;
    bool no_time = false;
    tr->add_option("--metrics", metrics_out, "metrics CSV path (default stdout)");
    tr->add_flag("--no-time", no_time, "omit the wall-clock column from the metrics CSV");

    // solve
    auto* solve = app.add_subcommand("solve", "solve one instance");
    EvalFlags solve_flags;
    solve_flags.add(solve);
    std::string solve_ckpt, solve_instance_path, solve_kind = "cvrp";
    int solve_n = 20;
    solve->add_option("--checkpoint", solve_ckpt);
    solve->add_option("--instance", solve_instance_path, "TSPLIB or JSON instance; default: generated from --seed");
    solve->add_option("--kind", solve_kind)->check(CLI::IsMember({"cvrp", "tsp"}));
    solve->add_option("--n", solve_n);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate on a dataset, CSV report");
    EvalFlags eval_flags;
    eval_flags.add(ev);
    std::string eval_ckpt, eval_dataset, eval_baselines, eval_out;
    ev->add_option("--checkpoint", eval_ckpt);
    ev->add_option("--dataset", eval_dataset)->required();
    ev->add_option("--baselines", eval_baselines, "JSON {name: objective}; default built-in nearest neighbour + 2-opt");
    ev->add_option("--out", eval_out);

    // ablate-balance
    auto* ab = app.add_subcommand("ablate-balance", "train DB / TB / HB variants and compare");
    TrainFlags ab_flags;
    ab_flags.add(ab);
    EvalFlags ab_eval;
    ab->add_option("--eval-mode", ab_eval.mode);
    std::string ab_dataset, ab_baselines, ab_out;
    ab->add_option("--dataset", ab_dataset)->required();
    ab->add_option("--baselines", ab_baselines);
    ab->add_option("--out", ab_out);

    // ablate-decode
    auto* ad_cmd = app.add_subcommand("ablate-decode", "compare depot / customer sampling rules");
    std::string ad_ckpt, ad_dataset, ad_baselines, ad_out;
    std::vector<std::uint64_t> ad_seeds{0, 1, 2};
    int ad_samples = 20;
    ad_cmd->add_option("--checkpoint", ad_ckpt);
    ad_cmd->add_option("--dataset", ad_dataset)->required();
    ad_cmd->add_option("--baselines", ad_baselines);
    ad_cmd->add_option("--seeds", ad_seeds);
    ad_cmd->add_option("--samples", ad_samples);
    ad_cmd->add_option("--out", ad_out);

    auto* verify = app.add_subcommand("verify", "run the verification suite");

    auto* parse = app.add_subcommand("parse", "convert a TSPLIB/CVRPLIB file to JSON");
    std::string parse_in, parse_out;
    bool parse_normalize = false;
    parse->add_option("input", parse_in)->required();
    parse->add_option("--out", parse_out);
    parse->add_flag("--normalize", parse_normalize, "rescale coordinates into the unit square");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (*gen) {
            save_dataset(generate_dataset(kind_of(gen_kind), gen_n, gen_count, seed, gen_cap), gen_out);
        } else if (*tr) {
            const auto config = train_flags.config(seed);
            const auto result = train(config);
            write_text(metrics_out, result.metrics.csv(!no_time));
            std::fprintf(stderr, "initial greedy %.4f, final greedy %.4f\n", result.metrics.initial_greedy,
                         result.metrics.epochs.back().mean_len_greedy);
        } else if (*solve) {
            const auto inst = solve_instance_path.empty()
                                  ? (kind_of(solve_kind) == ProblemKind::CVRP ? generate_cvrp(solve_n, seed) : generate_tsp(solve_n, seed))
                                  : load_instance(solve_instance_path);
            const auto net = net_or_untrained(solve_ckpt, seed);
            auto solved = solve_instance(net, inst, solve_flags.options(seed));
            std::printf("length %.10g\nroute", solved.objective);
            for (int v : solved.route) std::printf(" %d", v);
            std::printf("\n");
        } else if (*ev) {
            const auto d = load_dataset(eval_dataset);
            const auto net = net_or_untrained(eval_ckpt, seed);
            const auto opts = eval_flags.options(seed);
            const auto report = evaluate(net, d, opts, baselines_for(d, eval_baselines),
                                         config_hash(eval_ckpt.empty() ? nlohmann::json(seed) : nlohmann::json(eval_ckpt)));
            write_text(eval_out, report.csv());
            for (const auto& s : report.summary())
                std::fprintf(stderr, "%s n=%d: obj %.4f gap %.2f%% time %.4fs (ref %s)\n", s.method.c_str(), s.size,
                             s.mean_objective, s.mean_gap_pct, s.mean_seconds, report.reference.c_str());
        } else if (*ab) {
            const auto d = load_dataset(ab_dataset);
            const auto result = ablate_balance(ab_flags.config(seed), d, ab_eval.options(seed), baselines_for(d, ab_baselines));
            write_text(ab_out, result.report.csv());
            for (const auto& e : result.expectations)
                std::fprintf(stderr, "%s: %s\n", e.holds ? "expected" : "WARNING, not observed", e.description.c_str());
        } else if (*ad_cmd) {
            const auto d = load_dataset(ad_dataset);
            const auto net = net_or_untrained(ad_ckpt, seed);
            EvalOptions o;
            o.samples = ad_samples;
            const auto result = ablate_decoding(net, d, ad_seeds, o, baselines_for(d, ad_baselines));
            write_text(ad_out, result.report.csv());
            for (const auto& [m, v] : cross_seed_variance(result.report))
                std::fprintf(stderr, "%s cross-seed variance %.6g\n", m.c_str(), v);
            for (const auto& e : result.expectations)
                std::fprintf(stderr, "%s: %s\n", e.holds ? "expected" : "WARNING, not observed", e.description.c_str());
        } else if (*verify) {
            VerificationOptions vo;
            vo.seed = seed;
            const auto run = run_verification(vo);
            std::cout << run.text();
            return run.passed() ? kExitOk : kExitCheckFailed;
        } else if (*parse) {
            ParseOptions po;
            po.normalize = parse_normalize;
            write_text(parse_out, nlohmann::json(load_tsplib(parse_in, po)).dump(1) + "\n");
        }
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}
