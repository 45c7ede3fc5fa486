#include "coopo/offline.hpp"

#include <algorithm>
#include <cmath>

namespace coopo {

AgentState make_agent(const Environment& env, const ModelConfig& cfg, std::uint64_t seed) {
    AgentState a{make_policy(env, cfg, derive_seed(seed, 1)), q_net_spec(env, cfg), {}, value_net_spec(env, cfg), {}};
    a.q = init_params(a.q_spec, derive_seed(seed, 2));
    a.v = init_params(a.v_spec, derive_seed(seed, 3));
    return a;
}

void OfflineConfig::validate() const {
    if (epochs < 1) throw InputError("offline.epochs must be >= 1");
    if (batch < 1) throw InputError("offline.batch must be >= 1");
    if (!(lambda > 0.0)) throw InputError("offline.lambda must be > 0");
    if (kl_weight && !(*kl_weight >= 0.0)) throw InputError("offline.kl_weight must be >= 0");
    if (!(w_max >= 1.0)) throw InputError("offline.w_max must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("offline.gamma must lie in [0, 1)");
    if (!(lr > 0.0)) throw InputError("offline.lr must be > 0");
}

Matrix state_features(const Environment& env, const TransitionTable& batch, bool next) {
    Matrix f(batch.size(), env.feature_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) env.encode(next ? batch.s2(i) : batch.s(i), f.row(i));
    return f;
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

Matrix concat_actions(const Environment& env, const Matrix& features, const Matrix& actions) {
    const double lim = env.pointmass_params().accel_limit;
    Matrix in(features.rows, features.cols + actions.cols);
    for (std::size_t i = 0; i < features.rows; ++i) {
        std::copy(features.row(i).begin(), features.row(i).end(), in.row(i).begin());
        for (std::size_t d = 0; d < actions.cols; ++d) in(i, features.cols + d) = std::clamp(actions(i, d), -lim, lim);
    }
    return in;
}

Matrix batch_actions(const TransitionTable& batch) {
    Matrix a(batch.size(), batch.action_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) std::copy(batch.a(i).begin(), batch.a(i).end(), a.row(i).begin());
    return a;
}

std::size_t action_index(const TransitionTable& batch, std::size_t i) { return static_cast<std::size_t>(batch.a(i)[0]); }

}  // namespace

Matrix q_inputs(const Environment& env, const Matrix& features, const TransitionTable& batch) {
    if (env.discrete()) return features;
    return concat_actions(env, features, batch_actions(batch));
}

Vec q_values(const Environment& env, const MlpSpec& q_spec, std::span<const double> q, const TransitionTable& batch) {
    const Matrix out = forward_batch(q_spec, q, q_inputs(env, state_features(env, batch), batch));
    Vec res(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) res[i] = env.discrete() ? out(i, action_index(batch, i)) : out(i, 0);
    return res;
}

Vec v_values(const Environment& env, const MlpSpec& v_spec, std::span<const double> v, const TransitionTable& batch) {
    const Matrix out = forward_batch(v_spec, v, state_features(env, batch));
    return out.data;
}

Vec td_target(const Environment& env, const TransitionTable& batch, const MlpSpec& q_spec,
              std::span<const double> q, const Policy& pi, double gamma, Rng& rng) {
    const Matrix next = state_features(env, batch, true);
    const auto dists = pi.dists(next);
    Vec y(batch.size());
    if (env.discrete()) {
        const Matrix qn = forward_batch(q_spec, q, next);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            double eq = 0.0;
            for (std::size_t a = 0; a < qn.cols; ++a) eq += dists[i].probs[a] * qn(i, a);
            y[i] = batch.r(i) + (batch.done(i) ? 0.0 : gamma * eq);
        }
        return y;
    }
    Matrix acts(batch.size(), env.action_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Vec a = sample(dists[i], rng);
        std::copy(a.begin(), a.end(), acts.row(i).begin());
    }
    const Matrix qn = forward_batch(q_spec, q, concat_actions(env, next, acts));
    for (std::size_t i = 0; i < batch.size(); ++i) y[i] = batch.r(i) + (batch.done(i) ? 0.0 : gamma * qn(i, 0));
    return y;
}

BatchLoss q_regression_loss(const TransitionTable& batch, const Vec& y, bool discrete) {
    return [batch, y, discrete](const Matrix& out, Matrix& d_out) {
        const double n = static_cast<double>(out.rows);
        double loss = 0.0;
        for (std::size_t i = 0; i < out.rows; ++i) {
            const std::size_t col = discrete ? action_index(batch, i) : 0;
            const double e = out(i, col) - y[i];
            loss += e * e;
            d_out(i, col) = 2.0 * e / n;
        }
        return loss / n;
    };
}

BatchLoss mse_loss(const Vec& y) {
    return [y](const Matrix& out, Matrix& d_out) {
        const double n = static_cast<double>(out.rows);
        double loss = 0.0;
        for (std::size_t i = 0; i < out.rows; ++i) {
            const double e = out(i, 0) - y[i];
            loss += e * e;
            d_out(i, 0) = 2.0 * e / n;
        }
        return loss / n;
    };
}

double regression_step(const MlpSpec& spec, ParameterVector& params, OptimizerState& opt, const Matrix& inputs,
                       const BatchLoss& loss) {
    const LossGrad lg = grad(spec, params, inputs, loss);
    adam_update(opt, params, lg.grad);
    return lg.loss;
}

double update_q(const Environment& env, const TransitionTable& batch, const Vec& y, AgentState& agent,
                OptimizerState& opt) {
    const Matrix in = q_inputs(env, state_features(env, batch), batch);
    return regression_step(agent.q_spec, agent.q, opt, in, q_regression_loss(batch, y, env.discrete()));
}

double update_v(const Environment& env, const TransitionTable& batch, const Vec& y, AgentState& agent,
                OptimizerState& opt) {
    return regression_step(agent.v_spec, agent.v, opt, state_features(env, batch), mse_loss(y));
}

Vec advantage_hat(const Environment& env, const AgentState& agent, const TransitionTable& batch) {
    Vec adv = q_values(env, agent.q_spec, agent.q, batch);
    const Vec v = v_values(env, agent.v_spec, agent.v, batch);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] -= v[i];
    return adv;
}

Vec awac_weights(std::span<const double> adv, double lambda, double w_max, std::size_t* clipped) {
    const double log_cap = std::log(w_max);
    Vec w(adv.size());
    std::size_t n_clipped = 0;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        const double z = adv[i] / lambda;
        if (z >= log_cap) {
            w[i] = w_max;
            ++n_clipped;
        } else {
            w[i] = std::exp(z);
        }
    }
    if (clipped) *clipped = n_clipped;
    return w;
}

PolicyLoss awac_actor_loss(const TransitionTable& batch, const Vec& weights, const std::vector<ActionDist>& ref,
                           double kl_coef) {
    return [batch, weights, ref, kl_coef](const Matrix& out, std::span<const double> log_std, Matrix& d_out,
                                             std::span<double> d_log_std) {
        const double n = static_cast<double>(out.rows);
        double loss = 0.0;
        if (log_std.empty()) {
            Vec lp(out.cols);
            for (std::size_t i = 0; i < out.rows; ++i) {
                log_softmax(out.row(i), lp);
                const std::size_t a = action_index(batch, i);
                loss -= weights[i] * lp[a];
                log_softmax_grad(out.row(i), a, d_out.row(i), -weights[i] / n);
                if (kl_coef == 0.0) continue;
                double k = 0.0;
                for (std::size_t j = 0; j < out.cols; ++j) k += std::exp(lp[j]) * (lp[j] - ref[i].log_probs[j]);
                loss += kl_coef * k;
                for (std::size_t j = 0; j < out.cols; ++j)
                    d_out(i, j) += kl_coef / n * std::exp(lp[j]) * (lp[j] - ref[i].log_probs[j] - k);
            }
            return loss / n;
        }
        for (std::size_t i = 0; i < out.rows; ++i) {
            const auto a = batch.a(i);
            for (std::size_t d = 0; d < out.cols; ++d) {
                const double inv_std = std::exp(-log_std[d]);
                const double z = (a[d] - out(i, d)) * inv_std;
                loss -= weights[i] * (-0.5 * z * z - log_std[d] - kHalfLog2Pi);
                d_out(i, d) -= weights[i] / n * z * inv_std;
                d_log_std[d] -= weights[i] / n * (z * z - 1.0);
                if (kl_coef == 0.0) continue;
                const double var_q = std::exp(2.0 * ref[i].log_std[d]);
                const double var_p = std::exp(2.0 * log_std[d]);
                const double dm = out(i, d) - ref[i].mean[d];
                loss += kl_coef * (ref[i].log_std[d] - log_std[d] + (var_p + dm * dm) / (2.0 * var_q) - 0.5);
                d_out(i, d) += kl_coef / n * dm / var_q;
                d_log_std[d] += kl_coef / n * (var_p / var_q - 1.0);
            }
        }
        return loss / n;
    };
}

ActorStep actor_update(const Environment& env, const TransitionTable& batch, std::span<const double> adv,
                       Policy& pi, const Policy& ref, const OfflineConfig& cfg, OptimizerState& opt) {
    ActorStep step;
    const Vec w = awac_weights(adv, cfg.lambda, cfg.w_max, &step.clipped);
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) {
        step.skipped = true;
        return step;
    }
    const Matrix features = state_features(env, batch);
    const auto ref_dists = ref.dists(features);
    const LossGrad lg = policy_grad(pi, features, awac_actor_loss(batch, w, ref_dists, cfg.kl_coef()));
    adam_update(opt, pi.params(), lg.grad);
    step.loss = lg.loss;
    const auto new_dists = pi.dists(features);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        step.batch_kl += kl(new_dists[i], ref_dists[i]);
        step.batch_tv += tv(new_dists[i], ref_dists[i]);
    }
    step.batch_kl /= static_cast<double>(batch.size());
    step.batch_tv /= static_cast<double>(batch.size());
    return step;
}

std::vector<OfflineEpoch> run_offline(const Environment& env, const Dataset& dataset, AgentState& agent,
                                      const OfflineConfig& cfg, std::uint64_t seed, const OfflineObserver& observer) {
    cfg.validate();
    if (dataset.data.discrete() != env.discrete() || dataset.data.state_dim() != env.state_dim() ||
        dataset.data.action_dim() != env.action_dim())
        throw InputError("dataset does not match environment '" + env.name() + "'");

    OptimizerState opt_q = OptimizerState::for_size(agent.q.size(), cfg.lr);
    OptimizerState opt_v = OptimizerState::for_size(agent.v.size(), cfg.lr);
    OptimizerState opt_pi = OptimizerState::for_size(agent.pi.params().size(), cfg.lr);
    Rng rng(derive_seed(seed, 0x0ff));

    const std::size_t n = dataset.size();
    const std::size_t bsz = std::min(cfg.batch, n);
    const std::size_t steps = (n + cfg.batch - 1) / cfg.batch;
    std::vector<OfflineEpoch> history;
    history.reserve(cfg.epochs);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const Policy ref = agent.pi;
        OfflineEpoch ep;
        ep.epoch = e;
        double adv_sum = 0.0;
        std::size_t adv_count = 0;
        for (std::size_t m = 0; m < steps; ++m) {
            const auto idx = sample_indices(n, bsz, rng);
            const TransitionTable batch = gather(dataset.data, idx);
            const Vec y = td_target(env, batch, agent.q_spec, agent.q, agent.pi, cfg.gamma, rng);
            ep.q_loss += update_q(env, batch, y, agent, opt_q);
            ep.v_loss += update_v(env, batch, y, agent, opt_v);
            const Vec adv = advantage_hat(env, agent, batch);
            for (double a : adv) {
                adv_sum += a;
                ep.adv_absmax = std::max(ep.adv_absmax, std::abs(a));
            }
            adv_count += adv.size();
            const ActorStep as = actor_update(env, batch, adv, agent.pi, ref, cfg, opt_pi);
            ep.policy_loss += as.loss;
            ep.kl_to_prev += as.batch_kl;
            ep.tv_to_prev += as.batch_tv;
            ep.clipped_weights += as.clipped;
            ep.skipped_steps += as.skipped ? 1 : 0;
        }
        const double inv = 1.0 / static_cast<double>(steps);
        ep.q_loss *= inv;
        ep.v_loss *= inv;
        ep.policy_loss *= inv;
        ep.kl_to_prev *= inv;
        ep.tv_to_prev *= inv;
        ep.adv_mean = adv_sum / static_cast<double>(adv_count);
        if (!std::isfinite(ep.q_loss) || !std::isfinite(ep.v_loss) || !std::isfinite(ep.policy_loss))
            throw NumericError("non-finite loss in offline epoch " + std::to_string(e));
        history.push_back(ep);
        if (observer) observer(ep, agent);
    }
    return history;
}

}  // namespace coopo
