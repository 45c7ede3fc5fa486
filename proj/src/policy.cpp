#include "coopo/policy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

namespace coopo {

namespace {

std::atomic<std::uint64_t> g_std_clamps{0};

const double kLogMinStd = std::log(kMinStd);
const double kLogMaxStd = std::log(kMaxStd);
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_same_family(const ActionDist& p, const ActionDist& q) {
    if (p.family != q.family) throw InputError("distribution family mismatch");
    if (p.family == PolicyFamily::categorical ? p.probs.size() != q.probs.size() : p.mean.size() != q.mean.size())
        throw InputError("distribution dimension mismatch");
}

}  // namespace

std::uint64_t std_clamp_count() { return g_std_clamps.load(); }

double clamp_log_std(double log_std) {
    if (log_std < kLogMinStd || log_std > kLogMaxStd) {
        g_std_clamps.fetch_add(1, std::memory_order_relaxed);
        return std::clamp(log_std, kLogMinStd, kLogMaxStd);
    }
    return log_std;
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

void log_softmax_grad(std::span<const double> logits, std::size_t action, std::span<double> out, double scale) {
    Vec lp(logits.size());
    log_softmax(logits, lp);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] += scale * ((i == action ? 1.0 : 0.0) - std::exp(lp[i]));
}

double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std, std::span<const double> a) {
    double lp = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
        const double z = (a[d] - mean[d]) * std::exp(-log_std[d]);
        lp += -0.5 * z * z - log_std[d] - kHalfLog2Pi;
    }
    return lp;
}

ActionDist ActionDist::categorical_from_logits(std::span<const double> logits) {
    ActionDist d;
    d.family = PolicyFamily::categorical;
    d.log_probs.resize(logits.size());
    log_softmax(logits, d.log_probs);
    d.probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) d.probs[i] = std::exp(d.log_probs[i]);
    return d;
}

ActionDist ActionDist::categorical_from_probs(std::span<const double> probs) {
    ActionDist d;
    d.family = PolicyFamily::categorical;
    d.probs.assign(probs.begin(), probs.end());
    d.log_probs.resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0)) throw InputError("negative probability");
        d.log_probs[i] = probs[i] > 0.0 ? std::log(probs[i]) : -std::numeric_limits<double>::infinity();
    }
    return d;
}

ActionDist ActionDist::gaussian(std::span<const double> mean, std::span<const double> log_std) {
    if (mean.size() != log_std.size()) throw InputError("mean and log_std lengths differ");
    ActionDist d;
    d.family = PolicyFamily::gaussian;
    d.mean.assign(mean.begin(), mean.end());
    d.log_std.resize(log_std.size());
    for (std::size_t i = 0; i < log_std.size(); ++i) d.log_std[i] = clamp_log_std(log_std[i]);
    return d;
}

double log_prob(const ActionDist& d, std::span<const double> action) {
    if (d.family == PolicyFamily::categorical) {
        if (action.size() != 1) throw InputError("categorical action must be one index");
        const double a = action[0];
        if (!(a >= 0.0) || a >= static_cast<double>(d.probs.size())) throw InputError("action outside support");
        return d.log_probs[static_cast<std::size_t>(a)];
    }
    if (action.size() != d.mean.size()) throw InputError("action dimension mismatch");
    return gaussian_log_prob(d.mean, d.log_std, action);
}

double kl(const ActionDist& p, const ActionDist& q) {
    require_same_family(p, q);
    double out = 0.0;
    if (p.family == PolicyFamily::categorical) {
        for (std::size_t i = 0; i < p.probs.size(); ++i)
            if (p.probs[i] > 0.0) out += p.probs[i] * (p.log_probs[i] - q.log_probs[i]);
        return std::max(out, 0.0);
    }
    for (std::size_t i = 0; i < p.mean.size(); ++i) {
        const double var_p = std::exp(2.0 * p.log_std[i]);
        const double var_q = std::exp(2.0 * q.log_std[i]);
        const double dm = p.mean[i] - q.mean[i];
        out += q.log_std[i] - p.log_std[i] + (var_p + dm * dm) / (2.0 * var_q) - 0.5;
    }
    return std::max(out, 0.0);
}

double tv(const ActionDist& p, const ActionDist& q) {
    require_same_family(p, q);
    if (p.family == PolicyFamily::categorical) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.probs.size(); ++i) s += std::abs(p.probs[i] - q.probs[i]);
        return std::min(1.0, 0.5 * s);
    }
    return std::min(1.0, std::sqrt(kl(p, q) / 2.0));
}

double entropy(const ActionDist& d) {
    double h = 0.0;
    if (d.family == PolicyFamily::categorical) {
        for (std::size_t i = 0; i < d.probs.size(); ++i)
            if (d.probs[i] > 0.0) h -= d.probs[i] * d.log_probs[i];
        return h;
    }
    for (double ls : d.log_std) h += 0.5 + kHalfLog2Pi + ls;
    return h;
}

Vec sample(const ActionDist& d, Rng& rng) {
    if (d.family == PolicyFamily::categorical) return {static_cast<double>(rng.categorical(d.probs))};
    Vec a(d.mean.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = d.mean[i] + std::exp(d.log_std[i]) * rng.normal();
    return a;
}

Policy Policy::categorical(MlpSpec net, ParameterVector params) {
    net.validate();
    if (params.size() != net.parameter_count()) throw InputError("categorical policy parameter count mismatch");
    Policy p;
    p.family_ = PolicyFamily::categorical;
    p.net_ = net;
    p.params_ = std::move(params);
    p.action_dim_ = net.output_dim;
    return p;
}

Policy Policy::gaussian(MlpSpec net, ParameterVector params, std::size_t action_dim) {
    net.validate();
    if (net.output_dim != action_dim) throw InputError("gaussian mean net must output action_dim values");
    if (params.size() != net.parameter_count() + action_dim)
        throw InputError("gaussian policy parameter count mismatch");
    Policy p;
    p.family_ = PolicyFamily::gaussian;
    p.net_ = net;
    p.params_ = std::move(params);
    p.action_dim_ = action_dim;
    return p;
}

std::span<const double> Policy::log_std() const {
    if (family_ != PolicyFamily::gaussian) return {};
    return {params_.data() + net_.parameter_count(), action_dim_};
}

ActionDist Policy::dist(std::span<const double> features) const {
    const Vec out = forward(net_, net_params(), features);
    if (family_ == PolicyFamily::categorical) return ActionDist::categorical_from_logits(out);
    return ActionDist::gaussian(out, log_std());
}

std::vector<ActionDist> Policy::dists(const Matrix& features) const {
    const Matrix out = forward_batch(net_, net_params(), features);
    std::vector<ActionDist> res;
    res.reserve(out.rows);
    for (std::size_t i = 0; i < out.rows; ++i)
        res.push_back(family_ == PolicyFamily::categorical ? ActionDist::categorical_from_logits(out.row(i))
                                                           : ActionDist::gaussian(out.row(i), log_std()));
    return res;
}

Vec Policy::mode(std::span<const double> features) const {
    const Vec out = forward(net_, net_params(), features);
    if (family_ == PolicyFamily::gaussian) return out;
    return {static_cast<double>(std::max_element(out.begin(), out.end()) - out.begin())};
}

MlpSpec value_net_spec(const Environment& env, const ModelConfig& cfg) {
    const bool direct = env.discrete() && cfg.tabular_direct;
    return MlpSpec{env.feature_dim(), direct ? 0 : cfg.hidden_layers, cfg.hidden_units, 1, cfg.activation};
}

MlpSpec q_net_spec(const Environment& env, const ModelConfig& cfg) {
    if (env.discrete()) {
        const bool direct = cfg.tabular_direct;
        return MlpSpec{env.feature_dim(), direct ? 0 : cfg.hidden_layers, cfg.hidden_units, env.n_actions(),
                       cfg.activation};
    }
    return MlpSpec{env.feature_dim() + env.action_dim(), cfg.hidden_layers, cfg.hidden_units, 1, cfg.activation};
}

Policy make_policy(const Environment& env, const ModelConfig& cfg, std::uint64_t seed) {
    if (env.discrete()) {
        MlpSpec net{env.feature_dim(), cfg.tabular_direct ? 0 : cfg.hidden_layers, cfg.hidden_units,
                    env.n_actions(), cfg.activation};
        return Policy::categorical(net, init_params(net, seed));
    }
    MlpSpec net{env.feature_dim(), cfg.hidden_layers, cfg.hidden_units, env.action_dim(), cfg.activation};
    ParameterVector params = init_params(net, seed);
    params.resize(net.parameter_count() + env.action_dim(), cfg.init_log_std);
    return Policy::gaussian(net, std::move(params), env.action_dim());
}

LossGrad policy_grad(const Policy& policy, const Matrix& features, const PolicyLoss& loss) {
    const MlpSpec& net = policy.net();
    Tape tape = forward_tape(net, policy.net_params(), features);
    Matrix d_out(tape.output.rows, tape.output.cols);
    const auto raw_log_std = policy.log_std();
    Vec clamped(raw_log_std.size()), d_log_std(raw_log_std.size(), 0.0);
    for (std::size_t i = 0; i < clamped.size(); ++i) clamped[i] = clamp_log_std(raw_log_std[i]);

    LossGrad res;
    res.loss = loss(tape.output, clamped, d_out, d_log_std);
    if (!std::isfinite(res.loss)) throw NumericError("non-finite policy loss");
    res.grad.assign(policy.params().size(), 0.0);
    backward(net, policy.net_params(), tape, d_out, res.grad);
    for (std::size_t i = 0; i < clamped.size(); ++i)
        res.grad[net.parameter_count() + i] = clamped[i] == raw_log_std[i] ? d_log_std[i] : 0.0;
    return res;
}

double policy_loss_value(const Policy& policy, const Matrix& features, const PolicyLoss& loss) {
    const Matrix out = forward_batch(policy.net(), policy.net_params(), features);
    Matrix d_out(out.rows, out.cols);
    const auto raw_log_std = policy.log_std();
    Vec clamped(raw_log_std.size()), d_log_std(raw_log_std.size(), 0.0);
    for (std::size_t i = 0; i < clamped.size(); ++i) clamped[i] = clamp_log_std(raw_log_std[i]);
    return loss(out, clamped, d_out, d_log_std);
}

Matrix policy_table(const Policy& policy, const Environment& env) {
    if (policy.family() != PolicyFamily::categorical) throw UnsupportedError("policy_table needs a categorical policy");
    const std::size_t S = env.mdp().n_states;
    Matrix feats(S, S, 0.0);
    for (std::size_t s = 0; s < S; ++s) feats(s, s) = 1.0;
    const Matrix logits = forward_batch(policy.net(), policy.net_params(), feats);
    Matrix table(S, logits.cols);
    for (std::size_t s = 0; s < S; ++s) {
        Vec lp(logits.cols);
        log_softmax(logits.row(s), lp);
        for (std::size_t a = 0; a < logits.cols; ++a) table(s, a) = std::exp(lp[a]);
    }
    return table;
}

}  // namespace coopo
