#include "coopo/online.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coopo {

void OnlineConfig::validate() const {
    if (episodes < 1) throw InputError("online.episodes must be >= 1");
    if (rollout_episodes < 1) throw InputError("online.rollout_episodes must be >= 1");
    if (batch < 1) throw InputError("online.batch must be >= 1");
    if (!(clip > 0.0 && clip < 1.0)) throw InputError("online.clip must lie in (0, 1)");
    if (epochs_per_update < 1) throw InputError("online.epochs_per_update must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("online.gamma must lie in [0, 1)");
    if (!(lr > 0.0)) throw InputError("online.lr must be > 0");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InputError("online.gae_lambda must lie in [0, 1]");
    if (total_step_budget && *total_step_budget < 1) throw InputError("online.total_step_budget must be >= 1");
}

std::size_t RolloutBuffer::step_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.size();
    return n;
}

const RolloutStep& RolloutBuffer::step(std::size_t flat_index) const {
    for (const auto& t : trajectories) {
        if (flat_index < t.size()) return t[flat_index];
        flat_index -= t.size();
    }
    throw InputError("rollout step index out of range");
}

Vec RolloutBuffer::episode_returns() const {
    Vec out;
    for (const auto& t : trajectories) {
        double g = 0.0;
        for (const auto& s : t) g += s.r;
        out.push_back(g);
    }
    return out;
}

RolloutBuffer collect(Environment& env, const Policy& pi, const MlpSpec& v_spec, std::span<const double> v,
                      std::size_t n_episodes, std::uint64_t seed, std::size_t max_steps) {
    if (n_episodes < 1) throw InputError("collect needs at least one episode");
    RolloutBuffer buf;
    Rng rng(derive_seed(seed, 0xac7));
    std::size_t total = 0;
    Vec feat(env.feature_dim());
    for (std::size_t ep = 0; ep < n_episodes && total < max_steps; ++ep) {
        std::vector<RolloutStep> traj;
        Vec s = env.reset(derive_seed(seed, 0xe915, ep));
        bool done = false;
        try {
            while (!done && total < max_steps) {
                env.encode(s, feat);
                const ActionDist d = pi.dist(feat);
                RolloutStep st;
                st.s = s;
                st.a = sample(d, rng);
                st.logp_old = log_prob(d, st.a);
                st.v_old = forward(v_spec, v, feat)[0];
                const StepResult res = env.step(st.a);
                st.r = res.reward;
                done = res.done;
                s = res.next_state;
                traj.push_back(std::move(st));
                ++total;
            }
        } catch (const NumericError& e) {
            throw NumericError("trajectory " + std::to_string(ep) + ": " + e.what());
        }
        buf.trajectories.push_back(std::move(traj));
    }
    return buf;
}

Vec reward_to_go(std::span<const double> rewards, double gamma, std::size_t horizon) {
    if (rewards.size() > horizon) throw InputError("trajectory longer than the horizon");
    Vec out(rewards.size());
    double acc = 0.0;
    for (std::size_t h = rewards.size(); h-- > 0;) {
        acc = rewards[h] + gamma * acc;
        out[h] = acc;
    }
    return out;
}

void compute_advantages(RolloutBuffer& buffer, const OnlineConfig& cfg, std::size_t horizon) {
    buffer.rtg.clear();
    buffer.adv.clear();
    for (const auto& t : buffer.trajectories) {
        Vec r(t.size());
        for (std::size_t h = 0; h < t.size(); ++h) r[h] = t[h].r;
        const Vec rtg = reward_to_go(r, cfg.gamma, horizon);
        buffer.rtg.insert(buffer.rtg.end(), rtg.begin(), rtg.end());
        if (!cfg.gae) {
            for (std::size_t h = 0; h < t.size(); ++h) buffer.adv.push_back(rtg[h] - t[h].v_old);
            continue;
        }
        Vec adv(t.size());
        double acc = 0.0;
        for (std::size_t h = t.size(); h-- > 0;) {
            const double v_next = h + 1 < t.size() ? t[h + 1].v_old : 0.0;
            acc = t[h].r + cfg.gamma * v_next - t[h].v_old + cfg.gamma * cfg.gae_lambda * acc;
            adv[h] = acc;
        }
        buffer.adv.insert(buffer.adv.end(), adv.begin(), adv.end());
    }
    if (!cfg.adv_normalize || buffer.adv.empty()) return;
    const double n = static_cast<double>(buffer.adv.size());
    const double mean = std::accumulate(buffer.adv.begin(), buffer.adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : buffer.adv) var += (a - mean) * (a - mean);
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    for (double& a : buffer.adv) a = (a - mean) / sd;
}

double clipped_objective(double ratio, double adv, double clip) {
    return std::min(ratio * adv, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv);
}

PolicyLoss ppo_surrogate_loss(const Matrix& actions, std::span<const double> logp_old, std::span<const double> adv,
                              double clip, PpoStats* stats) {
    return [actions, logp_old = Vec(logp_old.begin(), logp_old.end()), adv = Vec(adv.begin(), adv.end()), clip,
            stats](const Matrix& out, std::span<const double> log_std, Matrix& d_out, std::span<double> d_log_std) {
        const bool categorical = log_std.empty();
        Vec lp(out.cols);
        std::vector<double> logp(out.rows);
        std::vector<char> keep(out.rows, 1);
        std::size_t included = 0, clipped = 0, excluded = 0;
        for (std::size_t i = 0; i < out.rows; ++i) {
            if (categorical) {
                log_softmax(out.row(i), lp);
                logp[i] = lp[static_cast<std::size_t>(actions(i, 0))];
            } else {
                logp[i] = gaussian_log_prob(out.row(i), log_std, actions.row(i));
            }
            if (!(std::abs(logp[i] - logp_old[i]) <= kMaxLogRatio)) {
                keep[i] = 0;
                ++excluded;
            } else {
                ++included;
            }
        }
        double total = 0.0;
        const double n = static_cast<double>(std::max<std::size_t>(included, 1));
        for (std::size_t i = 0; i < out.rows; ++i) {
            if (!keep[i]) continue;
            const double c = std::exp(logp[i] - logp_old[i]);
            const double unclipped = c * adv[i];
            const double obj = clipped_objective(c, adv[i], clip);
            total += obj;
            if (std::abs(c - 1.0) > clip) ++clipped;
            if (unclipped > obj) continue;  // the clipped branch is active: zero gradient
            const double dlogp = -c * adv[i] / n;
            if (categorical) {
                log_softmax_grad(out.row(i), static_cast<std::size_t>(actions(i, 0)), d_out.row(i), dlogp);
                continue;
            }
            for (std::size_t d = 0; d < out.cols; ++d) {
                const double inv_std = std::exp(-log_std[d]);
                const double z = (actions(i, d) - out(i, d)) * inv_std;
                d_out(i, d) += dlogp * z * inv_std;
                d_log_std[d] += dlogp * (z * z - 1.0);
            }
        }
        if (stats) {
            stats->objective = total / n;
            stats->fraction_clipped = included ? static_cast<double>(clipped) / static_cast<double>(included) : 0.0;
            stats->excluded = excluded;
            stats->included = included;
        }
        return -total / n;
    };
}

namespace {

struct FlatBuffer {
    Matrix features;
    Matrix actions;
    Vec logp_old;
};

FlatBuffer flatten(const Environment& env, const RolloutBuffer& buffer) {
    const std::size_t n = buffer.step_count();
    FlatBuffer f{Matrix(n, env.feature_dim()), Matrix(n, env.action_dim()), Vec(n)};
    std::size_t i = 0;
    for (const auto& t : buffer.trajectories)
        for (const auto& s : t) {
            env.encode(s.s, f.features.row(i));
            std::copy(s.a.begin(), s.a.end(), f.actions.row(i).begin());
            f.logp_old[i] = s.logp_old;
            ++i;
        }
    return f;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    return idx;
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    return out;
}

Vec take(std::span<const double> v, std::span<const std::size_t> rows) {
    Vec out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[rows[i]];
    return out;
}

// Calls fn(rows) for every minibatch of every pass.
template <class Fn>
void minibatch_passes(std::size_t n, const OnlineConfig& cfg, Rng& rng, Fn&& fn) {
    for (std::size_t e = 0; e < cfg.epochs_per_update; ++e) {
        const auto idx = shuffled(n, rng);
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t len = std::min(cfg.batch, n - start);
            fn(std::span<const std::size_t>(idx.data() + start, len));
        }
    }
}

}  // namespace

PpoStats ppo_actor_update(const Environment& env, const RolloutBuffer& buffer, Policy& pi, const OnlineConfig& cfg,
                          OptimizerState& opt, Rng& rng) {
    const std::size_t n = buffer.step_count();
    if (n == 0) throw InputError("empty rollout buffer");
    if (buffer.adv.size() != n) throw InputError("advantages not computed");
    const FlatBuffer flat = flatten(env, buffer);
    PpoStats total;
    double frac_sum = 0.0;
    std::size_t batches = 0;
    minibatch_passes(n, cfg, rng, [&](std::span<const std::size_t> rows) {
        const Matrix feats = take_rows(flat.features, rows);
        const Matrix acts = take_rows(flat.actions, rows);
        const Vec lp_old = take(flat.logp_old, rows);
        const Vec adv = take(buffer.adv, rows);
        PpoStats st;
        const LossGrad lg = policy_grad(pi, feats, ppo_surrogate_loss(acts, lp_old, adv, cfg.clip, &st));
        if (st.included > 0) adam_update(opt, pi.params(), lg.grad);
        total.objective += st.objective;
        frac_sum += st.fraction_clipped;
        total.excluded += st.excluded;
        total.included += st.included;
        ++batches;
    });
    total.objective /= static_cast<double>(batches);
    total.fraction_clipped = frac_sum / static_cast<double>(batches);
    return total;
}

double value_update(const Environment& env, const RolloutBuffer& buffer, AgentState& agent, const OnlineConfig& cfg,
                    OptimizerState& opt, Rng& rng) {
    const std::size_t n = buffer.step_count();
    if (n == 0) throw InputError("empty rollout buffer");
    if (buffer.rtg.size() != n) throw InputError("reward-to-go not computed");
    const FlatBuffer flat = flatten(env, buffer);
    double loss = 0.0;
    std::size_t batches = 0;
    minibatch_passes(n, cfg, rng, [&](std::span<const std::size_t> rows) {
        const Vec y = take(buffer.rtg, rows);
        loss += regression_step(agent.v_spec, agent.v, opt, take_rows(flat.features, rows), mse_loss(y));
        ++batches;
    });
    loss /= static_cast<double>(batches);
    if (!std::isfinite(loss)) throw NumericError("non-finite value loss");
    return loss;
}

OnlineResult run_online(Environment& env, AgentState& agent, const OnlineConfig& cfg, std::uint64_t seed,
                        std::size_t step_allowance, const OnlineObserver& observer) {
    cfg.validate();
    OptimizerState opt_pi = OptimizerState::for_size(agent.pi.params().size(), cfg.lr);
    OptimizerState opt_v = OptimizerState::for_size(agent.v.size(), cfg.lr);
    Rng rng(derive_seed(seed, 0x0a1));
    OnlineResult res;
    for (std::size_t t = 0; t < cfg.episodes && res.env_steps < step_allowance; ++t) {
        RolloutBuffer buf = collect(env, agent.pi, agent.v_spec, agent.v, cfg.rollout_episodes, derive_seed(seed, 0xc011, t),
                                    step_allowance - res.env_steps);
        OnlineIteration it;
        it.iteration = t;
        it.env_steps = buf.step_count();
        it.trajectories = buf.trajectories.size();
        const Vec returns = buf.episode_returns();
        it.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());

        OnlineConfig raw = cfg;
        raw.adv_normalize = false;
        compute_advantages(buf, raw, env.horizon());
        for (double a : buf.adv) {
            it.adv_mean += a;
            it.adv_absmax = std::max(it.adv_absmax, std::abs(a));
        }
        it.adv_mean /= static_cast<double>(buf.adv.size());
        if (cfg.adv_normalize) compute_advantages(buf, cfg, env.horizon());

        const Policy before = agent.pi;
        const PpoStats ps = ppo_actor_update(env, buf, agent.pi, cfg, opt_pi, rng);
        it.policy_loss = -ps.objective;
        it.fraction_clipped = ps.fraction_clipped;
        it.excluded = ps.excluded;
        it.v_loss = value_update(env, buf, agent, cfg, opt_v, rng);

        const FlatBuffer flat = flatten(env, buf);
        const auto old_d = before.dists(flat.features);
        const auto new_d = agent.pi.dists(flat.features);
        for (std::size_t i = 0; i < old_d.size(); ++i) {
            it.kl_to_prev += kl(new_d[i], old_d[i]);
            it.tv_to_prev += tv(new_d[i], old_d[i]);
        }
        it.kl_to_prev /= static_cast<double>(old_d.size());
        it.tv_to_prev /= static_cast<double>(old_d.size());

        res.env_steps += it.env_steps;
        res.trajectories += it.trajectories;
        res.iterations.push_back(it);
        if (observer) observer(it, agent);
    }
    return res;
}

}  // namespace coopo
