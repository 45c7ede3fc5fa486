#include "coopo/cycle.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "coopo/checkpoint.hpp"

namespace coopo {

EvalResult evaluate(const Environment& env_in, const Policy& pi, std::size_t n, std::uint64_t seed, bool stochastic) {
    if (n < 1) throw InputError("evaluate needs at least one episode");
    Environment env = env_in;
    Rng rng(derive_seed(seed, 0xac7));
    Vec feat(env.feature_dim());
    Vec undiscounted(n), discounted(n);
    for (std::size_t ep = 0; ep < n; ++ep) {
        Vec s = env.reset(derive_seed(seed, 0xe915, ep));
        double g = 0.0, gd = 0.0, disc = 1.0;
        bool done = false;
        while (!done) {
            env.encode(s, feat);
            const Vec a = stochastic ? sample(pi.dist(feat), rng) : pi.mode(feat);
            const StepResult res = env.step(a);
            g += res.reward;
            gd += disc * res.reward;
            disc *= env.gamma();
            done = res.done;
            s = res.next_state;
        }
        undiscounted[ep] = g;
        discounted[ep] = gd;
    }
    auto stats = [n](const Vec& xs, double& mean, double& sd) {
        mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    };
    EvalResult r;
    r.episodes = n;
    stats(undiscounted, r.mean_return, r.std_return);
    stats(discounted, r.mean_discounted, r.std_discounted);
    return r;
}

void CoopoConfig::validate() const {
    if (cycles < 1) throw InputError("cycles must be >= 1");
    if (eval_episodes < 1) throw InputError("eval_episodes must be >= 1");
    if (data.n < 1) throw InputError("data.n must be >= 1");
    offline.validate();
    online.validate();
}

nlohmann::json CycleReport::to_json() const {
    return {{"k", k},
            {"J_before", J_before},
            {"J_mid", J_mid},
            {"J_after", J_after},
            {"return_before", return_before},
            {"return_mid", return_mid},
            {"return_after", return_after},
            {"mean_kl_offline", mean_kl_offline},
            {"env_steps_this_cycle", env_steps_this_cycle},
            {"env_steps_cum", env_steps_cum},
            {"traj_cum", traj_cum},
            {"wall_ms", wall_ms},
            {"pi_in", hex64(pi_in)},
            {"q_in", hex64(q_in)},
            {"v_in", hex64(v_in)},
            {"q_out", hex64(q_out)},
            {"v_out", hex64(v_out)},
            {"pi_out", hex64(pi_out)},
            {"dataset_checksum", hex64(dataset_checksum)}};
}

Environment make_environment(const CoopoConfig& cfg) {
    if (cfg.env.ends_with(".json")) return Environment::tabular(load_tabular(cfg.env));
    return make_benchmark(cfg.env);
}

Dataset resolve_dataset(const CoopoConfig& cfg, const Environment& env) {
    if (!cfg.data.path.empty()) {
        Dataset d = load_dataset(cfg.data.path);
        if (d.meta.env != env.name())
            throw InputError("dataset was generated on '" + d.meta.env + "', config env is '" + env.name() + "'");
        return d;
    }
    return generate(env, behavior_tier(cfg.data.tier, env), cfg.data.n, cfg.data.seed);
}

std::optional<std::size_t> first_reach(const std::vector<CycleReport>& reports, double threshold) {
    for (const auto& r : reports)
        if (r.return_after >= threshold) return r.traj_cum;
    return std::nullopt;
}

namespace {

[[noreturn]] void rethrow_with_cycle(std::size_t k) {
    const std::string prefix = "cycle " + std::to_string(k) + ": ";
    try {
        throw;
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const SchemaError& e) {
        throw SchemaError(prefix + e.what());
    } catch (const UnsupportedError& e) {
        throw UnsupportedError(prefix + e.what());
    } catch (const InputError& e) {
        throw InputError(prefix + e.what());
    }
}

MetricRow eval_row(const std::string& run_id, std::size_t k, std::size_t tag, const EvalResult& ev, std::size_t steps,
                   std::size_t traj, double wall) {
    MetricRow row;
    row.run_id = run_id;
    row.cycle = k;
    row.phase = "eval";
    row.step = tag;
    row.mean_return = ev.mean_return;
    row.env_steps_cum = steps;
    row.traj_cum = traj;
    row.wall_ms = wall;
    return row;
}

void save_agent(const std::filesystem::path& dir, const AgentState& a) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "pi.ckpt", {a.pi.net(), a.pi.params(), a.pi.extra_count()});
    save_checkpoint(dir / "q.ckpt", {a.q_spec, a.q, 0});
    save_checkpoint(dir / "v.ckpt", {a.v_spec, a.v, 0});
}

RunResult run_cycles(const CoopoConfig& cfg, const Dataset* dataset, AgentState agent, const RunHooks& hooks) {
    cfg.validate();
    Environment env = make_environment(cfg);
    const bool stochastic = cfg.eval_stochastic.value_or(env.discrete());
    const std::size_t budget = cfg.online.total_step_budget.value_or(std::numeric_limits<std::size_t>::max());
    const std::uint64_t eval_seed = derive_seed(cfg.seed, ~std::uint64_t{0}, 0xe7a1);
    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        if (!cfg.wall_clock) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    auto emit = [&](const MetricRow& r) {
        if (hooks.metrics) hooks.metrics(r);
    };

    std::ofstream reports_out;
    if (hooks.out_dir) {
        std::filesystem::create_directories(*hooks.out_dir);
        reports_out.open(*hooks.out_dir / "reports.jsonl", std::ios::trunc);
        if (!reports_out) throw InputError("cannot write reports.jsonl under '" + hooks.out_dir->string() + "'");
    }

    RunResult res;
    EvalResult ev = evaluate(env, agent.pi, cfg.eval_episodes, eval_seed, stochastic);
    emit(eval_row(hooks.run_id, 0, kEvalBefore, ev, 0, 0, wall()));

    for (std::size_t k = 0; k < cfg.cycles && res.env_steps < budget; ++k) {
        CycleReport rep;
        rep.k = k;
        rep.J_before = ev.mean_discounted;
        rep.return_before = ev.mean_return;
        rep.pi_in = checksum(agent.pi.params());
        rep.q_in = checksum(agent.q);
        rep.v_in = checksum(agent.v);
        std::optional<AgentState> start, mid;
        if (hooks.on_cycle) start = agent;
        std::vector<OfflineEpoch> epochs;
        try {
            if (dataset) {
                rep.dataset_checksum = dataset->checksum();
                epochs = run_offline(env, *dataset, agent, cfg.offline, derive_seed(cfg.seed, k, 1),
                                     [&](const OfflineEpoch& e, const AgentState&) {
                                         MetricRow row;
                                         row.run_id = hooks.run_id;
                                         row.cycle = k;
                                         row.phase = "offline";
                                         row.step = e.epoch;
                                         row.policy_loss = e.policy_loss;
                                         row.q_loss = e.q_loss;
                                         row.v_loss = e.v_loss;
                                         row.kl_to_prev = e.kl_to_prev;
                                         row.tv_to_prev = e.tv_to_prev;
                                         row.adv_mean = e.adv_mean;
                                         row.adv_absmax = e.adv_absmax;
                                         row.env_steps_cum = res.env_steps;
                                         row.traj_cum = res.trajectories;
                                         row.wall_ms = wall();
                                         emit(row);
                                     });
                for (const auto& e : epochs) rep.mean_kl_offline += e.kl_to_prev;
                rep.mean_kl_offline /= static_cast<double>(epochs.size());
                ev = evaluate(env, agent.pi, cfg.eval_episodes, eval_seed, stochastic);
                emit(eval_row(hooks.run_id, k, kEvalMid, ev, res.env_steps, res.trajectories, wall()));
            }
            rep.J_mid = ev.mean_discounted;
            rep.return_mid = ev.mean_return;
            rep.q_out = checksum(agent.q);
            if (hooks.on_cycle) mid = agent;

            const OnlineResult on = run_online(
                env, agent, cfg.online, derive_seed(cfg.seed, k, 2), budget - res.env_steps,
                [&](const OnlineIteration& it, const AgentState&) {
                    res.env_steps += it.env_steps;
                    res.trajectories += it.trajectories;
                    MetricRow row;
                    row.run_id = hooks.run_id;
                    row.cycle = k;
                    row.phase = "online";
                    row.step = it.iteration;
                    row.mean_return = it.mean_return;
                    row.policy_loss = it.policy_loss;
                    row.v_loss = it.v_loss;
                    row.kl_to_prev = it.kl_to_prev;
                    row.tv_to_prev = it.tv_to_prev;
                    row.adv_mean = it.adv_mean;
                    row.adv_absmax = it.adv_absmax;
                    row.env_steps_cum = res.env_steps;
                    row.traj_cum = res.trajectories;
                    row.wall_ms = wall();
                    emit(row);
                });
            rep.env_steps_this_cycle = on.env_steps;
            if (checksum(agent.q) != rep.q_out) throw NumericError("Q parameters changed during the online phase");
        } catch (const Error&) {
            rethrow_with_cycle(k);
        }
        ev = evaluate(env, agent.pi, cfg.eval_episodes, eval_seed, stochastic);
        rep.J_after = ev.mean_discounted;
        rep.return_after = ev.mean_return;
        rep.env_steps_cum = res.env_steps;
        rep.traj_cum = res.trajectories;
        rep.v_out = checksum(agent.v);
        rep.pi_out = checksum(agent.pi.params());
        rep.wall_ms = wall();
        emit(eval_row(hooks.run_id, k, kEvalAfter, ev, res.env_steps, res.trajectories, rep.wall_ms));

        if (hooks.out_dir) {
            save_agent(*hooks.out_dir / ("cycle_" + std::to_string(k)), agent);
            reports_out << rep.to_json().dump() << '\n' << std::flush;
        }
        if (hooks.on_cycle) hooks.on_cycle({k, &*start, &*mid, &agent, &epochs});
        if (hooks.on_report) hooks.on_report(rep);
        res.reports.push_back(rep);

        if (cfg.early_stop && res.reports.size() > 10) {
            const double old = res.reports[res.reports.size() - 11].return_after;
            const double now = rep.return_after;
            if ((now - old) < 1e-3 * std::max(std::abs(old), 1e-12)) break;
        }
    }
    res.agent = std::move(agent);
    return res;
}

}  // namespace

RunResult run_coopo(const CoopoConfig& cfg, const Dataset& dataset, const RunHooks& hooks) {
    const Environment env = make_environment(cfg);
    return run_coopo(cfg, dataset, make_agent(env, cfg.model, derive_seed(cfg.seed, 0x1417)), hooks);
}

RunResult run_coopo(const CoopoConfig& cfg, const Dataset& dataset, AgentState initial, const RunHooks& hooks) {
    return run_cycles(cfg, &dataset, std::move(initial), hooks);
}

RunResult run_ppo_baseline(const CoopoConfig& cfg, const RunHooks& hooks) {
    const Environment env = make_environment(cfg);
    return run_cycles(cfg, nullptr, make_agent(env, cfg.model, derive_seed(cfg.seed, 0x1417)), hooks);
}

}  // namespace coopo
