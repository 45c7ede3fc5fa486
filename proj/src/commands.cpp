#include "coopo/commands.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "coopo/theory.hpp"

namespace coopo {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig load_run_config(const std::optional<fs::path>& path, const std::optional<std::uint64_t>& seed_flag) {
    RunConfig rc = path ? parse_config_file(*path) : parse_config(json::object());
    if (const char* env = std::getenv("COOPO_SEED"); env && *env) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0' || env[0] == '-') throw InputError("COOPO_SEED must be a non-negative integer");
        rc.coopo.seed = v;
    }
    if (seed_flag) rc.coopo.seed = *seed_flag;
    return rc;
}

void write_resolved_config(const RunConfig& rc, const fs::path& out) {
    fs::create_directories(out);
    std::ofstream f(out / "resolved_config.json");
    if (!f) throw InputError("cannot write resolved_config.json under '" + out.string() + "'");
    f << to_json(rc).dump(2) << '\n';
}

namespace {

RunResult run_algo(const CoopoConfig& cfg, const std::string& algo, const RunHooks& hooks) {
    if (algo == "coopo") {
        const Environment env = make_environment(cfg);
        const Dataset d = resolve_dataset(cfg, env);
        return run_coopo(cfg, d, hooks);
    }
    if (algo == "ppo") return run_ppo_baseline(cfg, hooks);
    throw InputError("unknown algo '" + algo + "' (expected coopo or ppo)");
}

double median(Vec xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

json nan_as_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json suite_lemma1(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1e1));
    double worst = 0.0;
    std::size_t instances = 0;
    for (std::size_t i = 0; i < 200; ++i) {
        const std::size_t S = 1 + rng.uniform_index(6), A = 2 + rng.uniform_index(4);
        const Matrix pi = random_policy(S, A, rng, 1.5);
        const TabularMdp mdp = random_mdp(S, A, 0.9, 20, rng);
        const Matrix adv = exact_eval(mdp, pi).A;
        for (double lambda : {0.05, 1.0, 9.0}) {
            for (double r : lemma1_residuals(pi, adv, lambda)) worst = std::max(worst, r);
            ++instances;
        }
    }
    Matrix bandit_pi(1, 2, 0.5), bandit_adv(1, 2);
    bandit_adv(0, 0) = 1.0;
    bandit_adv(0, 1) = -1.0;
    const double bandit = lemma1_residuals(bandit_pi, bandit_adv, 1.0)[0];
    worst = std::max(worst, bandit);
    return {{"suite", "lemma1"}, {"instances", instances + 1}, {"max_residual", worst}, {"pass", worst < 1e-9}};
}

json suite_closed_form() {
    json cases = json::array();
    double worst = 0.0;
    for (const std::string name : {"bandit2", "chain5"}) {
        const Environment env = make_benchmark(name);
        const TabularMdp& mdp = env.mdp();
        const ExactEval e = exact_eval(mdp, uniform_policy(mdp.n_states, mdp.n_actions));
        double amax = 0.0;
        for (double x : e.A.data) amax = std::max(amax, std::abs(x));
        // keeps exp(A/lambda) under the weight clip
        const double lambda = std::max(1.0, amax / 2.0);
        const ClosedFormFit fit = fit_closed_form(env, lambda);
        worst = std::max(worst, fit.max_tv);
        cases.push_back({{"env", name}, {"lambda", lambda}, {"max_tv", fit.max_tv}, {"steps", fit.steps}});
    }
    return {{"suite", "closed_form"}, {"instances", cases.size()}, {"max_residual", worst},
            {"pass", worst <= 1e-3}, {"cases", cases}};
}

std::vector<std::pair<std::string, std::uint64_t>> tabular_runs(std::uint64_t seed) {
    std::vector<std::pair<std::string, std::uint64_t>> runs;
    const std::vector<std::string> envs = {"chain5", "grid4x4", "bandit2"};
    for (std::uint64_t i = 0; i < 10; ++i) runs.emplace_back(envs[i % envs.size()], seed + i);
    return runs;
}

EmpiricalRun empirical(const std::string& env_name, std::uint64_t seed) {
    const CoopoConfig cfg = tabular_run_config(env_name, seed);
    const Environment env = make_environment(cfg);
    return empirical_mode_run(cfg, resolve_dataset(cfg, env));
}

json suite_pinsker(std::uint64_t seed) {
    std::size_t pairs = 0, violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [env, s] : tabular_runs(seed)) {
        const EmpiricalRun r = empirical(env, s);
        pairs += r.pinsker_pairs;
        violations += r.pinsker_violations;
        worst = std::max(worst, r.pinsker_worst_gap);
    }
    return {{"suite", "pinsker"}, {"instances", pairs}, {"max_residual", worst}, {"violations", violations},
            {"pass", violations == 0}};
}

json suite_theorem1(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7e1));
    std::size_t cycles = 0, ok = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const std::size_t S = 2 + rng.uniform_index(5), A = 2 + rng.uniform_index(4);
        const TabularMdp mdp = random_mdp(S, A, 0.9, 400, rng);
        const Matrix pi0 = random_policy(S, A, rng);
        const double lambda = std::array{0.05, 1.0, 9.0}[i % 3];
        for (const BoundReport& b : exact_mode_run(mdp, pi0, lambda, 0.1, 5).bounds) {
            ++cycles;
            ok += b.satisfied;
        }
    }
    std::size_t emp_cycles = 0, emp_ok = 0;
    for (const std::string env : {"chain5", "grid4x4"}) {
        for (const BoundReport& b : empirical(env, seed).bounds) {
            ++emp_cycles;
            emp_ok += b.satisfied;
        }
    }
    const double rate = static_cast<double>(ok) / static_cast<double>(cycles);
    return {{"suite", "theorem1"},
            {"instances", cycles},
            {"satisfaction_rate", rate},
            {"empirical_cycles", emp_cycles},
            {"empirical_satisfaction_rate", static_cast<double>(emp_ok) / static_cast<double>(emp_cycles)},
            {"pass", ok == cycles}};
}

json suite_theorem2() {
    const TabularMdp mdp = make_tabular_fixture("chain5");
    json cases = json::array();
    bool pass = true;
    for (double lambda : {0.05, 1.0, 9.0}) {
        const ExactRun run = exact_mode_run(mdp, uniform_policy(mdp.n_states, mdp.n_actions), lambda, 0.1, 30);
        Vec g;
        for (const auto& b : run.bounds) g.push_back(b.G_off);
        const ConvergenceTrace t = theorem2_trace(mdp, run.J, g);
        const bool ok = t.envelope.rho < 1.0 && t.envelope.holds && t.envelope.monotone_outside_floor;
        pass = pass && ok;
        cases.push_back({{"lambda", lambda},
                         {"rho", t.envelope.rho},
                         {"floor", t.envelope.floor},
                         {"kappa", nan_as_null(t.kappa)},
                         {"Delta_0", t.Delta.front()},
                         {"Delta_K", t.Delta.back()},
                         {"pass", ok}});
    }
    return {{"suite", "theorem2"}, {"instances", cases.size()}, {"pass", pass}, {"cases", cases}};
}

json suite_concentrability(std::uint64_t seed) {
    json cases = json::array();
    bool pass = true;
    for (const std::string tier : {"expert", "medium", "random"}) {
        const Environment env = make_benchmark("chain5");
        const TabularMdp& mdp = env.mdp();
        const BehaviorPolicyDescriptor beh = behavior_tier(tier, env);
        const Dataset d = generate(env, beh, 2000, derive_seed(seed, 0xc0c));
        const Matrix opt = greedy_policy(value_iteration(mdp).greedy, mdp.n_actions);
        const Concentrability exact = concentrability(mdp, opt, behavior_table(mdp, beh));
        const Concentrability data = concentrability(mdp, opt, d);
        // the exact ratio must be finite for every tier since all tiers mix in uniform actions
        pass = pass && !exact.infinite;
        cases.push_back({{"tier", tier},
                         {"C_exact", exact.infinite ? json(nullptr) : json(exact.C)},
                         {"C_dataset", data.infinite ? json(nullptr) : json(data.C)}});
    }
    return {{"suite", "concentrability"}, {"instances", cases.size()}, {"pass", pass}, {"cases", cases}};
}

}  // namespace

RunResult train(const RunConfig& rc, const std::string& algo, const fs::path& out, const std::string& run_id) {
    write_resolved_config(rc, out);
    const fs::path csv = out / "metrics.csv";
    fs::remove(csv);
    MetricsWriter writer(csv);
    RunHooks hooks;
    hooks.metrics = writer.sink();
    hooks.out_dir = out;
    hooks.run_id = run_id;
    return run_algo(rc.coopo, algo, hooks);
}

Dataset gen_data(const std::string& env_name, const std::string& tier, std::size_t n, std::uint64_t seed,
                 const fs::path& path) {
    CoopoConfig cfg;
    cfg.env = env_name;
    const Environment env = make_environment(cfg);
    Dataset d = generate(env, behavior_tier(tier, env), n, seed);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_dataset(d, path);
    return d;
}

json verify_suite(const std::string& suite, std::uint64_t seed) {
    if (suite == "lemma1") return suite_lemma1(seed);
    if (suite == "closed_form") return suite_closed_form();
    if (suite == "pinsker") return suite_pinsker(seed);
    if (suite == "theorem1") return suite_theorem1(seed);
    if (suite == "theorem2") return suite_theorem2();
    if (suite == "concentrability") return suite_concentrability(seed);
    throw InputError("unknown suite '" + suite + "'");
}

json compare(const RunConfig& rc, const std::vector<std::string>& algos, const std::vector<double>& lambdas,
             const fs::path& out) {
    if (algos.empty()) throw InputError("compare needs at least one --algo");
    write_resolved_config(rc, out);
    const fs::path dir = out / "compare";
    fs::create_directories(dir);

    struct Curve {
        std::string name, algo;
        CoopoConfig cfg;
    };
    std::vector<Curve> curves;
    for (const std::string& algo : algos) {
        if (algo != "coopo" && algo != "ppo") throw InputError("unknown algo '" + algo + "' (expected coopo or ppo)");
        if (algo == "coopo" && !lambdas.empty()) {
            for (double l : lambdas) {
                Curve c{"coopo_lambda" + format_double(l), algo, rc.coopo};
                c.cfg.offline.lambda = l;
                curves.push_back(c);
            }
        } else {
            curves.push_back({algo, algo, rc.coopo});
        }
    }

    json summary;
    summary["threshold"] = rc.compare.threshold;
    summary["seeds"] = rc.compare.seeds;
    json per_curve = json::object();
    std::map<std::string, double> medians;
    for (const Curve& c : curves) {
        Vec reach, finals;
        json runs = json::array();
        for (std::size_t i = 0; i < rc.compare.seeds; ++i) {
            CoopoConfig cfg = c.cfg;
            cfg.seed = rc.coopo.seed + i;
            cfg.data.seed = rc.coopo.data.seed + i;
            const std::string id = c.name + "/s" + std::to_string(cfg.seed);
            const fs::path csv = dir / (c.name + "_s" + std::to_string(cfg.seed) + ".csv");
            fs::remove(csv);
            MetricsWriter writer(csv);
            RunHooks hooks;
            hooks.metrics = writer.sink();
            hooks.run_id = id;
            const RunResult r = run_algo(cfg, c.algo, hooks);
            const auto hit = first_reach(r.reports, rc.compare.threshold);
            // runs that never reach the threshold count at their full trajectory budget
            reach.push_back(static_cast<double>(hit.value_or(r.trajectories)));
            finals.push_back(r.reports.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : r.reports.back().return_after);
            runs.push_back({{"seed", cfg.seed},
                            {"first_reach", hit ? json(*hit) : json(nullptr)},
                            {"trajectories", r.trajectories},
                            {"env_steps", r.env_steps},
                            {"final_return", nan_as_null(finals.back())}});
        }
        medians[c.name] = median(reach);
        per_curve[c.name] = {{"runs", runs},
                             {"median_first_reach", nan_as_null(median(reach))},
                             {"median_final_return", nan_as_null(median(finals))}};
    }
    summary["curves"] = per_curve;
    if (medians.count("coopo") && medians.count("ppo") && medians["ppo"] > 0.0)
        summary["reach_ratio_coopo_over_ppo"] = medians["coopo"] / medians["ppo"];
    std::ofstream f(dir / "summary.json");
    f << summary.dump(2) << '\n';
    return summary;
}

}  // namespace coopo
