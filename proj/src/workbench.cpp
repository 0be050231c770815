#include "hbg/workbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hbg/comborder.hpp"
#include "hbg/errors.hpp"
#include "hbg/graphkit.hpp"

namespace hbg {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
}

int graph_k(int k, const VrpInstance& inst) { return k > 0 ? k : default_k(inst.size()); }

const Trajectory& best_of(const std::vector<Trajectory>& ts) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (ts[i].length < ts[best].length) best = i;
    return ts[best];
}

}  // namespace

Dataset generate_dataset(ProblemKind kind, int n, int count, std::uint64_t seed, int capacity) {
    if (count < 1) throw ParameterError("dataset count must be >= 1");
    Dataset d;
    const std::string prefix = kind == ProblemKind::CVRP ? "cvrp" : "tsp";
    d.name = prefix + std::to_string(n) + "_seed" + std::to_string(seed);
    const Rng root(seed);
    for (int i = 0; i < count; ++i) {
        Rng s = root.stream(StreamPurpose::instance, static_cast<std::uint64_t>(i));
        const std::uint64_t inst_seed = s.next_u64();
        VrpInstance inst = kind == ProblemKind::CVRP ? generate_cvrp(n, inst_seed, capacity) : generate_tsp(n, inst_seed);
        inst.name = prefix + std::to_string(n) + "_" + std::to_string(i);
        d.instances.push_back(std::move(inst));
    }
    return d;
}

nlohmann::json dataset_to_json(const Dataset& d) {
    nlohmann::json j = {{"name", d.name}, {"instances", nlohmann::json::array()}};
    for (const auto& inst : d.instances) j["instances"].push_back(inst);
    return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset d;
    try {
        d.name = j.value("name", std::string("dataset"));
        for (const auto& x : j.at("instances")) d.instances.push_back(x.get<VrpInstance>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("dataset: ") + e.what());
    }
    if (d.instances.empty()) throw ParseError("dataset: no instances");
    return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << dataset_to_json(d).dump(1) << "\n";
}

Dataset load_dataset(const std::string& path) { return dataset_from_json(parse_json(read_file(path), path)); }

BaselineSolutions builtin_baseline(const Dataset& d) {
    BaselineSolutions b;
    b.provenance = kBuiltinBaselineLabel;
    for (const auto& inst : d.instances) {
        const auto t = local_search(nearest_neighbor_tour(inst), inst, LocalSearchMode::two_opt);
        b.objective[inst.name] = t.length;
    }
    return b;
}

BaselineSolutions baselines_from_json(const nlohmann::json& j, const std::string& provenance) {
    BaselineSolutions b;
    b.provenance = j.value("provenance", provenance);
    const auto& obj = j.contains("objective") ? j.at("objective") : j;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (it.key() == "provenance") continue;
        const double v = it.value().get<double>();
        if (!(v > 0.0)) throw DomainError("baseline objective for " + it.key() + " must be positive");
        b.objective[it.key()] = v;
    }
    return b;
}

nlohmann::json baselines_to_json(const BaselineSolutions& b) {
    return {{"provenance", b.provenance}, {"objective", b.objective}};
}

double gap_percent(double objective, double reference) {
    if (!(reference > 0.0)) throw DomainError("gap: reference objective must be positive");
    return 100.0 * (objective - reference) / reference;
}

DecodeMode decode_mode_from_string(const std::string& s) {
    if (s == "sample") return DecodeMode::sample;
    if (s == "greedy") return DecodeMode::greedy;
    if (s == "depot_guided") return DecodeMode::depot_guided;
    if (s == "aco") return DecodeMode::aco;
    if (s == "aco_local_search") return DecodeMode::aco_local_search;
    throw ParameterError("unknown decode mode: " + s);
}

std::string to_string(DecodeMode m) {
    switch (m) {
        case DecodeMode::sample: return "sample";
        case DecodeMode::greedy: return "greedy";
        case DecodeMode::depot_guided: return "depot_guided";
        case DecodeMode::aco: return "aco";
        case DecodeMode::aco_local_search: return "aco_local_search";
    }
    return "?";
}

std::vector<EvalSummary> EvalReport::summary() const {
    std::map<std::pair<std::string, int>, EvalSummary> groups;
    for (const auto& r : rows) {
        auto& g = groups[{r.method, r.size}];
        g.method = r.method;
        g.size = r.size;
        ++g.count;
        g.mean_objective += r.objective;
        g.mean_seconds += r.seconds;
        g.mean_gap_pct += r.gap_pct;
    }
    std::vector<EvalSummary> out;
    for (auto& [key, g] : groups) {
        g.mean_objective /= g.count;
        g.mean_seconds /= g.count;
        g.mean_gap_pct /= g.count;
        out.push_back(g);
    }
    return out;
}

std::string EvalReport::csv(bool with_time) const {
    std::ostringstream os;
    os << "method,size,instance_id,objective,seconds,ref,gap_pct,seed,config_hash\n";
    char buf[128];
    for (const auto& r : rows) {
        os << r.method << "," << r.size << "," << r.instance_id << ",";
        std::snprintf(buf, sizeof buf, "%.10g,", r.objective);
        os << buf;
        if (with_time) {
            std::snprintf(buf, sizeof buf, "%.6f", r.seconds);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.10g,%.4f,", r.ref, r.gap_pct);
        os << buf << r.seed << "," << r.config_hash << "\n";
    }
    return os.str();
}

void EvalReport::append(const EvalReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    if (reference.empty()) reference = other.reference;
}

EvalReport evaluate(const std::vector<SolvedInstance>& solved, const BaselineSolutions& baselines,
                    const std::string& method, std::uint64_t seed, const std::string& config_hash) {
    EvalReport report;
    report.reference = baselines.provenance;
    for (const auto& s : solved) {
        const auto it = baselines.objective.find(s.instance_id);
        if (it == baselines.objective.end())
            throw ConsistencyError("no baseline objective for instance " + s.instance_id + " (" + baselines.provenance + ")");
        EvalRow r;
        r.method = method;
        r.size = s.size;
        r.instance_id = s.instance_id;
        r.objective = s.objective;
        r.seconds = s.seconds;
        r.ref = it->second;
        r.gap_pct = gap_percent(s.objective, it->second);
        r.seed = seed;
        r.config_hash = config_hash;
        report.rows.push_back(r);
    }
    return report;
}

SolvedInstance solve_instance(const PolicyNet& net, const VrpInstance& instance, const EvalOptions& options) {
    if (options.samples < 1) throw ParameterError("samples must be >= 1");
    const auto t0 = Clock::now();
    const SparseGraph graph = knn_sparsify(instance, graph_k(options.k, instance));
    const Rng rng(options.seed);
    Trajectory best;
    switch (options.mode) {
        case DecodeMode::greedy: best = greedy_decode(net, instance, graph); break;
        case DecodeMode::sample: best = best_of(sample_trajectories(net, instance, graph, options.samples, rng)); break;
        case DecodeMode::depot_guided: {
            std::vector<Trajectory> ts;
            for (int r = 0; r < options.samples; ++r)
                ts.push_back(depot_guided_decode(net, instance, graph, rng.stream(StreamPurpose::trajectory, static_cast<std::uint64_t>(r))));
            best = best_of(ts);
            break;
        }
        case DecodeMode::aco:
        case DecodeMode::aco_local_search: {
            AcoOptions ao;
            ao.params = options.aco;
            ao.local_search = options.mode == DecodeMode::aco_local_search;
            best = aco_solve(net, instance, graph, options.aco_iterations, options.n_ants, rng, ao).best;
            break;
        }
    }
    SolvedInstance s;
    s.seconds = since(t0);
    s.instance_id = instance.name;
    s.size = instance.customer_count();
    s.objective = best.length;
    s.route = best.nodes;
    return s;
}

EvalReport evaluate(const PolicyNet& net, const Dataset& dataset, const EvalOptions& options,
                    const BaselineSolutions& baselines, const std::string& config_hash) {
    for (const auto& inst : dataset.instances)
        if (!baselines.objective.count(inst.name))
            throw ConsistencyError("no baseline objective for instance " + inst.name + " (" + baselines.provenance + ")");
    std::vector<SolvedInstance> solved(dataset.instances.size());
    const Rng root(options.seed);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
        EvalOptions o = options;
        Rng s = root.stream(StreamPurpose::instance, i);
        o.seed = s.next_u64();
        solved[i] = solve_instance(net, dataset.instances[i], o);
    }
    return evaluate(solved, baselines, options.method.empty() ? to_string(options.mode) : options.method, options.seed,
                    config_hash);
}

std::string config_hash(const nlohmann::json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<BalanceVariant> balance_variants() { return {{"DB", 0.0, 1.0}, {"TB", 1.0, 0.0}, {"HB", 1.0, 1.0}}; }

AblationReport ablate_balance(const TrainConfig& config, const Dataset& dataset, const EvalOptions& options,
                              const BaselineSolutions& baselines) {
    AblationReport out;
    std::map<std::string, double> means;
    for (const auto& v : balance_variants()) {
        TrainConfig c = config;
        c.tb_weight = v.tb_weight;
        c.lambda_start = c.lambda_end = v.lambda;
        c.checkpoint_dir.clear();
        const auto trained = train(c);
        EvalOptions o = options;
        o.method = v.label;
        const auto rep = evaluate(trained.net, dataset, o, baselines, config_hash(nlohmann::json(c)));
        for (const auto& s : rep.summary()) means[v.label] += s.mean_objective;
        out.report.append(rep);
    }
    out.expectations.push_back({"HB <= TB on mean objective", means["HB"] <= means["TB"]});
    out.expectations.push_back({"TB <= DB on mean objective", means["TB"] <= means["DB"]});
    return out;
}

std::vector<DecodeVariant> decode_variants() {
    return {{"DS+CG", Choice::sample, Choice::greedy},
            {"DS+CS", Choice::sample, Choice::sample},
            {"DG+CG", Choice::greedy, Choice::greedy},
            {"DG+CS", Choice::greedy, Choice::sample}};
}

AblationReport ablate_decoding(const PolicyNet& net, const Dataset& dataset, const std::vector<std::uint64_t>& seeds,
                               const EvalOptions& options, const BaselineSolutions& baselines) {
    if (seeds.empty()) throw ParameterError("ablate_decoding: need at least one seed");
    if (options.samples < 1) throw ParameterError("samples must be >= 1");
    for (const auto& inst : dataset.instances)
        if (!inst.is_cvrp()) throw UnsupportedModeError("decoding ablation needs CVRP instances");
    const auto variants = decode_variants();
    const std::size_t n = dataset.instances.size();

    // [variant][seed][instance]
    std::vector<std::vector<std::vector<SolvedInstance>>> solved(
        variants.size(), std::vector<std::vector<SolvedInstance>>(seeds.size(), std::vector<SolvedInstance>(n)));
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        const auto& inst = dataset.instances[i];
        const SparseGraph graph = knn_sparsify(inst, graph_k(options.k, inst));
        const auto output = gnn_forward(net, build_features(inst, graph), graph, false);
        const ScoreFn score = policy_scorer(net, output, inst);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            const DecodeRule rule{variants[v].at_depot, variants[v].at_customer, 1.0};
            for (std::size_t s = 0; s < seeds.size(); ++s) {
                const auto t0 = Clock::now();
                const Rng base = Rng(seeds[s]).stream(StreamPurpose::instance, i);
                std::vector<Trajectory> ts;
                for (int r = 0; r < options.samples; ++r) {
                    Rng stream = base.stream(StreamPurpose::trajectory, static_cast<std::uint64_t>(r));
                    ts.push_back(construct(inst, graph, score, rule, stream));
                }
                const auto& b = best_of(ts);
                solved[v][s][i] = {inst.name, inst.customer_count(), b.length, since(t0), b.nodes};
            }
        }
    }
    AblationReport out;
    out.report.reference = baselines.provenance;
    const std::string hash = config_hash(nlohmann::json{{"samples", options.samples}, {"k", options.k}});
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t s = 0; s < seeds.size(); ++s)
            out.report.append(evaluate(solved[v][s], baselines, variants[v].label, seeds[s], hash));

    std::map<std::string, double> means;
    for (const auto& s : out.report.summary()) means[s.method] += s.mean_objective;
    bool lowest = true;
    for (const auto& [m, v] : means)
        if (v < means["DS+CG"]) lowest = false;
    out.expectations.push_back({"DS+CG has the lowest mean objective", lowest});
    return out;
}

std::map<std::string, double> cross_seed_variance(const EvalReport& report) {
    std::map<std::string, std::map<std::uint64_t, std::pair<double, int>>> per;
    for (const auto& r : report.rows) {
        auto& acc = per[r.method][r.seed];
        acc.first += r.objective;
        acc.second += 1;
    }
    std::map<std::string, double> out;
    for (const auto& [method, seeds] : per) {
        std::vector<double> m;
        for (const auto& [seed, acc] : seeds) m.push_back(acc.first / acc.second);
        const double mu = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
        double var = 0.0;
        for (double x : m) var += (x - mu) * (x - mu);
        out[method] = var / static_cast<double>(m.size());
    }
    return out;
}

std::string to_string(GradLoss g) {
    switch (g) {
        case GradLoss::tb: return "tb";
        case GradLoss::db_step: return "db_step";
        case GradLoss::db_trajectory: return "db_trajectory";
        case GradLoss::hybrid: return "hybrid";
    }
    return "?";
}

namespace {

ad::Var select_loss(const ObjectiveTerms& terms, GradLoss loss) {
    switch (loss) {
        case GradLoss::tb: return terms.tb;
        case GradLoss::db_trajectory: return ad::sum(terms.db_steps.front());
        case GradLoss::db_step: {
            const ad::Var col = terms.db_steps.front();
            const int t = col.rows() / 2;
            return ad::sum(ad::slice_rows(col, t, t + 1));
        }
        case GradLoss::hybrid: return terms.hybrid;
    }
    return terms.hybrid;
}

double loss_value(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph,
                  const FeatureSet& features, const std::vector<Trajectory>& trajs, const std::vector<double>& log_r,
                  GradLoss loss, std::vector<double>* grad) {
    ad::Tape tape;
    const auto params = bind_params(net, tape);
    const auto fwd = gnn_forward(net, params, features, graph, true);
    const auto terms = build_objective(net, params, fwd, instance, graph, trajs, log_r, ObjectiveOptions{});
    const ad::Var l = select_loss(terms, loss);
    if (grad) {
        tape.backward(l);
        grad->clear();
        for (const auto& t : tape.param_grads(net.param_count())) grad->insert(grad->end(), t.begin(), t.end());
    }
    return l.item();
}

}  // namespace

GradCheckResult gradient_check(const PolicyNet& net, const VrpInstance& instance, const SparseGraph& graph,
                               const std::vector<Trajectory>& trajectories, const std::vector<double>& log_rewards,
                               GradLoss loss, int max_coords, const Rng& rng, double eps) {
    const FeatureSet features = build_features(instance, graph);
    std::vector<double> analytic;
    const double f0 = loss_value(net, instance, graph, features, trajectories, log_rewards, loss, &analytic);
    std::vector<double> flat = flatten(net);
    if (analytic.size() != flat.size()) throw ShapeError("gradient_check: gradient size mismatch");

    std::vector<std::size_t> coords(flat.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && static_cast<std::size_t>(max_coords) < coords.size()) {
        Rng r = rng;
        for (std::size_t i = 0; i < static_cast<std::size_t>(max_coords); ++i) {
            const auto j = static_cast<std::size_t>(r.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(coords.size() - 1)));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(static_cast<std::size_t>(max_coords));
        std::sort(coords.begin(), coords.end());
    }

    std::vector<std::string> names;
    for (const auto& p : net.params())
        for (std::size_t i = 0; i < p.data.size(); ++i) names.push_back(p.name + "[" + std::to_string(i) + "]");

    const double floor = 1e-8;
    PolicyNet probe = net;
    auto eval_at = [&](std::size_t c, double x) {
        std::vector<double> v = flat;
        v[c] = x;
        assign_flat(probe, v);
        return loss_value(probe, instance, graph, features, trajectories, log_rewards, loss, nullptr);
    };
    auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };

    GradCheckResult res;
    for (std::size_t c : coords) {
        const double x = flat[c];
        const double fp = eval_at(c, x + eps), fm = eval_at(c, x - eps);
        const double central = (fp - fm) / (2.0 * eps);
        double err = rel(analytic[c], central);
        if (err >= 1e-4) {
            const double e2 = eps / 10.0;
            const double fp2 = eval_at(c, x + e2), fm2 = eval_at(c, x - e2);
            const double central2 = (fp2 - fm2) / (2.0 * e2);
            const double err2 = rel(analytic[c], central2);
            const double fwd = (fp2 - f0) / e2, bwd = (f0 - fm2) / e2;
            if (err2 >= 1e-4 && rel(fwd, bwd) > 1e-2) {
                ++res.skipped;
                continue;
            }
            err = std::min(err, err2);
        }
        ++res.checked;
        if (err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_param = names[c];
        }
    }
    return res;
}

bool VerificationRun::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string VerificationRun::text() const {
    std::ostringstream os;
    for (const auto& c : checks) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " (%.2fs)", c.seconds);
        os << (c.passed ? "PASS " : "FAIL ") << c.name << buf << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    }
    os << "\nbackward destruction table (informational; step-wise probabilities vs 1/closed form)\n"
       << discrepancy_table;
    os << (passed() ? "all checks passed\n" : "verification FAILED\n");
    return os.str();
}

namespace {

template <class F>
void run_check(VerificationRun& run, const std::string& name, F&& body) {
    CheckResult c;
    c.name = name;
    const auto t0 = Clock::now();
    try {
        c.detail = body(c.passed);
    } catch (const std::exception& e) {
        c.passed = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = since(t0);
    run.checks.push_back(std::move(c));
}

bool feasible(const VrpInstance& inst, const Trajectory& t) {
    try {
        validate_trajectory(inst, t);
        return true;
    } catch (const InvariantError&) {
        return false;
    }
}

}  // namespace

VerificationRun run_verification(const VerificationOptions& options) {
    VerificationRun run;
    const auto pb = options.backward_prob ? options.backward_prob : backward_step_prob;
    const Rng root(options.seed);

    run_check(run, "destruction-counts", [&](bool& ok) {
        auto rep = verify_statements(3, 3);
        const Rational extra = [] {
            Rational s = 0;
            for (const auto& q : enumerate_destructions(4, 2)) s += q.probability;
            return s;
        }();
        const bool spot = BigInt(enumerate_destructions(4, 2).size()) == count_closed(4, 2) &&
                          count_recurrence(4, 2) == count_closed(4, 2) && extra == 1;
        ok = rep.counts_agree() && rep.mass_is_one() && spot;
        run.discrepancy_table = rep.table();
        return std::string("a,j <= 3 and (4,2): recurrence = closed form = enumeration, mass 1");
    });

    run_check(run, "backward-probability", [&](bool& ok) {
        std::ostringstream d;
        const double depot = pb(2, 1, true), customer = pb(2, 1, false);
        bool good = std::abs(depot - 0.2) < 1e-15 && customer == 1.0;
        d << "P_b(depot|2,1)=" << depot << " P_b(customer)=" << customer;
        // Step-wise destruction probabilities must form a distribution over orders.
        for (int a = 0; a <= 3; ++a) {
            for (int j = 0; j <= 3; ++j) {
                if (a + j == 0) continue;
                double mass = 0.0;
                for (const auto& seq : enumerate_destructions(a, j)) {
                    int ra = a, rj = j;
                    double p = 1.0;
                    for (const auto& s : seq.steps) {
                        p *= pb(ra, rj, true);
                        if (s.segment < a) --ra;
                        else --rj;
                    }
                    mass += p;
                }
                if (!(std::abs(mass - 1.0) < 1e-12)) {
                    good = false;
                    d << "; mass(" << a << "," << j << ")=" << mass;
                }
            }
        }
        const double lp = backward_traj_logprob(2, 1);
        if (!(std::abs(lp + std::log(24.0)) < 1e-12)) {
            good = false;
            d << "; log P_B(2,1)=" << lp;
        }
        ok = good;
        return d.str();
    });

    run_check(run, "forward-factorization", [&](bool& ok) {
        const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 1).key());
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{}, 11);
        const auto out = gnn_forward(net, build_features(inst, graph), graph, false);
        const auto score = policy_scorer(net, out, inst);
        const auto trajs = sample_trajectories(inst, graph, score, 100, root.stream(StreamPurpose::check, 2));
        double worst = 0.0;
        for (const auto& t : trajs) {
            double recorded = 0.0, replayed = 0.0;
            for (const auto& r : t.records) recorded += r.log_pf;
            const auto steps = replay(inst, graph, t);
            for (std::size_t s = 0; s < steps.size(); ++s) {
                const int from = t.records[s].from_node;
                std::vector<double> z;
                for (const auto& c : steps[s].candidates) z.push_back(score(from, c));
                const double mx = *std::max_element(z.begin(), z.end());
                double lse = 0.0;
                for (double v : z) lse += std::exp(v - mx);
                replayed += z[static_cast<std::size_t>(steps[s].chosen)] - mx - std::log(lse);
            }
            worst = std::max(worst, std::abs(recorded - replayed));
        }
        ok = worst < 1e-9;
        return "max |sum log_pf - log P_F| = " + std::to_string(worst);
    });

    run_check(run, "gradients", [&](bool& ok) {
        const auto inst = generate_cvrp(8, root.stream(StreamPurpose::check, 3).key(), 15);
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{2, 8, false, 0.1}, 5);
        auto trajs = sample_trajectories(net, inst, graph, 4, root.stream(StreamPurpose::check, 4));
        std::vector<double> lens;
        for (const auto& t : trajs) lens.push_back(t.length);
        apply_energies(trajs, energy_table(trajs));
        const auto log_r = log_reward_transform(lens, 20.0);
        std::ostringstream d;
        bool good = true;
        for (GradLoss g : {GradLoss::tb, GradLoss::db_step, GradLoss::db_trajectory, GradLoss::hybrid}) {
            const auto r = gradient_check(net, inst, graph, trajs, log_r, g, 200, root.stream(StreamPurpose::check, 5));
            good = good && r.max_rel_error < 1e-4 && r.checked > 0;
            d << to_string(g) << "=" << r.max_rel_error << " ";
        }
        ok = good;
        return d.str();
    });

    run_check(run, "feasibility", [&](bool& ok) {
        const PolicyNet net(NetConfig{}, 3);
        int bad = 0, total = 0;
        const int per = 100;
        const int n_inst = std::max(1, options.feasibility_samples / per);
        for (int i = 0; i < n_inst; ++i) {
            const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 100 + static_cast<std::uint64_t>(i)).key());
            const auto graph = knn_sparsify(inst, default_k(inst.size()));
            for (const auto& t : sample_trajectories(net, inst, graph, per, root.stream(StreamPurpose::trajectory, static_cast<std::uint64_t>(i)))) {
                bad += !feasible(inst, t);
                ++total;
            }
            const int guided = options.feasibility_guided / n_inst;
            for (int r = 0; r < guided; ++r) {
                bad += !feasible(inst, depot_guided_decode(net, inst, graph, root.stream(StreamPurpose::ant, static_cast<std::uint64_t>(i * 1000 + r))));
                ++total;
            }
            const int ants = std::max(1, options.feasibility_aco / n_inst);
            const auto map = uniform_pheromone(graph, 1.0);
            for (const auto& t : ant_construct(map, inst, graph, ants, root.stream(StreamPurpose::epoch, static_cast<std::uint64_t>(i)))) {
                bad += !feasible(inst, t);
                ++total;
            }
        }
        ok = bad == 0;
        return std::to_string(bad) + " infeasible of " + std::to_string(total);
    });

    run_check(run, "energy-centering", [&](bool& ok) {
        const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 6).key());
        const auto graph = knn_sparsify(inst, default_k(inst.size()));
        const PolicyNet net(NetConfig{}, 9);
        double worst = 0.0;
        for (int h : {2, 5, 20}) {
            const auto table = energy_table(sample_trajectories(net, inst, graph, h, root.stream(StreamPurpose::check, 7)));
            for (int t = 0; t < table.steps; ++t) {
                double s = 0.0;
                for (int i = 0; i < table.h; ++i) s += table.at(i, t);
                worst = std::max(worst, std::abs(s));
            }
        }
        ok = worst < 1e-9;
        return "max |column sum| = " + std::to_string(worst);
    });

    run_check(run, "local-search", [&](bool& ok) {
        int worse = 0;
        for (int i = 0; i < 100; ++i) {
            const auto inst = generate_cvrp(20, root.stream(StreamPurpose::check, 200 + static_cast<std::uint64_t>(i)).key());
            const auto graph = knn_sparsify(inst, default_k(inst.size()));
            const auto t = ant_construct(uniform_pheromone(graph, 1.0), inst, graph, 1, root.stream(StreamPurpose::check, 300 + static_cast<std::uint64_t>(i))).front();
            const auto r = local_search(t, inst, LocalSearchMode::two_opt_plus_relocate);
            worse += r.length > t.length + 1e-12 || !feasible(inst, r);
        }
        ok = worse == 0;
        return std::to_string(worse) + " of 100 got longer or infeasible";
    });

    return run;
}

}  // namespace hbg
