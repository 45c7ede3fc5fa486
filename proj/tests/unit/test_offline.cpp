#include <gtest/gtest.h>

#include <cmath>

#include "coopo/offline.hpp"
#include "coopo/optim.hpp"
#include "coopo/theory.hpp"
#include "support.hpp"

namespace coopo {
namespace {

ModelConfig tanh_model(bool direct) {
    ModelConfig m;
    m.hidden_layers = 1;
    m.hidden_units = 6;
    m.activation = Activation::tanh;
    m.tabular_direct = direct;
    return m;
}

// Zero weights and a constant output bias.
void set_constant(const MlpSpec& spec, ParameterVector& p, double c) {
    std::fill(p.begin(), p.end(), 0.0);
    const std::size_t last = spec.layer_count() - 1;
    const std::size_t bias = spec.layer_offset(last) + spec.layer_out(last) * spec.layer_in(last);
    for (std::size_t i = 0; i < spec.layer_out(last); ++i) p[bias + i] = c;
}

TransitionTable one_transition(double r, bool done) {
    TransitionTable t(true, 1, 1);
    t.push_back({{0.0}, {1.0}, r, {1.0}, done});
    return t;
}

TEST(TdTarget, TerminalUsesReward) {
    const Environment env = make_benchmark("chain5");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    set_constant(ag.q_spec, ag.q, 5.0);
    Rng rng(0);
    EXPECT_EQ(td_target(env, one_transition(1.0, true), ag.q_spec, ag.q, ag.pi, 0.99, rng)[0], 1.0);
}

TEST(TdTarget, ExactExpectationTabular) {
    const Environment env = make_benchmark("chain5");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    set_constant(ag.q_spec, ag.q, 2.0);
    Rng rng(0);
    EXPECT_NEAR(td_target(env, one_transition(1.0, false), ag.q_spec, ag.q, ag.pi, 0.99, rng)[0], 2.98, 1e-12);
}

TEST(TdTarget, ZeroDiscountGivesReward) {
    for (const std::string name : {"grid4x4", "pointmass"}) {
        const Environment env = make_benchmark(name);
        const AgentState ag = make_agent(env, tanh_model(false), 2);
        Rng rng(3);
        const TransitionTable b = test::random_batch(env, 20, rng);
        const Vec y = td_target(env, b, ag.q_spec, ag.q, ag.pi, 0.0, rng);
        for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(y[i], b.r(i));
    }
}

TEST(Losses, QLossZeroAtTarget) {
    const Environment env = make_benchmark("chain5");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    set_constant(ag.q_spec, ag.q, 0.5);
    Rng rng(1);
    const TransitionTable b = test::random_batch(env, 10, rng);
    const Vec y(b.size(), 0.5);
    const LossGrad lg = grad(ag.q_spec, ag.q, q_inputs(env, state_features(env, b), b),
                             q_regression_loss(b, y, true));
    EXPECT_EQ(lg.loss, 0.0);
    for (double g : lg.grad) EXPECT_EQ(g, 0.0);
}

TEST(Losses, ConstantValueFitsMean) {
    // Single-bias value model trained on targets {1, 3} converges to 2.
    MlpSpec spec;
    spec.input_dim = 1;
    spec.hidden_layers = 0;
    spec.output_dim = 1;
    ParameterVector p{0.0, 0.0};
    const Matrix x(2, 1, 0.0);
    OptimizerState opt = OptimizerState::for_size(2, 0.05);
    const BatchLoss loss = mse_loss(Vec{1.0, 3.0});
    for (int i = 0; i < 3000; ++i) regression_step(spec, p, opt, x, loss);
    EXPECT_NEAR(p[1], 2.0, 1e-6);
}

TEST(Losses, QAndVLossGradients) {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const Environment env = make_benchmark(i % 2 ? "pointmass" : "grid4x4");
        const AgentState ag = make_agent(env, tanh_model(false), 10 + i);
        const TransitionTable b = test::random_batch(env, 12, rng);
        Vec y(b.size());
        for (double& v : y) v = rng.uniform(-2, 2);
        const Matrix feats = state_features(env, b);
        const auto q = finite_diff_check(ag.q_spec, ag.q, q_inputs(env, feats, b),
                                         q_regression_loss(b, y, env.discrete()), 1e-4, i);
        EXPECT_TRUE(q.pass) << "Q instance " << i << " rel " << q.max_rel_error;
        const auto v = finite_diff_check(ag.v_spec, ag.v, feats, mse_loss(y), 1e-4, i);
        EXPECT_TRUE(v.pass) << "V instance " << i << " rel " << v.max_rel_error;
    }
}

TEST(Losses, ActorLossGradient) {
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        const Environment env = make_benchmark(i % 2 ? "pointmass" : "chain5");
        const AgentState ag = make_agent(env, tanh_model(false), 30 + i);
        const Policy ref = make_agent(env, tanh_model(false), 60 + i).pi;
        const TransitionTable b = test::random_batch(env, 10, rng);
        Vec adv(b.size());
        for (double& a : adv) a = rng.uniform(-1, 1);
        const Matrix feats = state_features(env, b);
        const PolicyLoss loss = awac_actor_loss(b, awac_weights(adv, 0.5, 20.0), ref.dists(feats), 0.3);
        const LossGrad lg = policy_grad(ag.pi, feats, loss);
        auto objective = [&](std::span<const double> theta) {
            Policy p = ag.pi;
            std::copy(theta.begin(), theta.end(), p.params().begin());
            return policy_loss_value(p, feats, loss);
        };
        const auto r = finite_diff_check(objective, ag.pi.params(), lg.grad, 1e-4, i);
        EXPECT_TRUE(r.pass) << "instance " << i << " rel " << r.max_rel_error;
    }
}

TEST(Advantage, QMinusV) {
    const Environment env = make_benchmark("chain5");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    set_constant(ag.q_spec, ag.q, 3.0);
    set_constant(ag.v_spec, ag.v, 2.5);
    EXPECT_NEAR(advantage_hat(env, ag, one_transition(0, false))[0], 0.5, 1e-15);
    set_constant(ag.v_spec, ag.v, 3.0);
    EXPECT_EQ(advantage_hat(env, ag, one_transition(0, false))[0], 0.0);
}

TEST(Weights, ZeroAdvantageGivesOne) {
    for (double w : awac_weights(Vec{0, 0, 0}, 0.05, 20.0)) EXPECT_EQ(w, 1.0);
}

TEST(Weights, LargeLambdaApproachesOne) {
    for (double w : awac_weights(Vec{3.0, -2.0}, 1e9, 20.0)) EXPECT_NEAR(w, 1.0, 1e-8);
}

TEST(Weights, ClipInactiveInsideBound) {
    Rng rng(2);
    const double lambda = 0.7, w_max = 20.0;
    Vec adv(500);
    for (double& a : adv) a = rng.uniform(-1, 1) * lambda * std::log(w_max);
    std::size_t clipped = 99;
    const Vec w = awac_weights(adv, lambda, w_max, &clipped);
    EXPECT_EQ(clipped, 0u);
    for (std::size_t i = 0; i < adv.size(); ++i) EXPECT_NEAR(w[i], std::exp(adv[i] / lambda), 1e-12 * w[i]);
}

TEST(Weights, ClipCountsAndStaysFinite) {
    std::size_t clipped = 0;
    const Vec w = awac_weights(Vec{1000.0, 0.2, -1000.0}, 0.05, 20.0, &clipped);
    EXPECT_EQ(w[0], 20.0);
    EXPECT_EQ(w[1], 20.0);
    EXPECT_EQ(clipped, 2u);
    EXPECT_GE(w[2], 0.0);
}

TEST(ClosedForm, BanditFixedPoint) {
    const ClosedFormFit fit = fit_closed_form(make_benchmark("bandit2"), 1.0, 1e-7);
    EXPECT_NEAR(fit.target(0, 0), 0.8807970779778823, 1e-12);
    EXPECT_LE(fit.max_tv, 1e-6);
    EXPECT_NEAR(fit.fitted(0, 0), 0.8808, 1e-3);
}

TEST(ClosedForm, Chain5FixedPoint) {
    EXPECT_LE(fit_closed_form(make_benchmark("chain5"), 1.0, 1e-6).max_tv, 1e-6);
}

TEST(ActorUpdate, AllZeroWeightsSkip) {
    const Environment env = make_benchmark("chain5");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    const Policy before = ag.pi;
    OfflineConfig cfg;
    cfg.lambda = 1e-3;
    OptimizerState opt = OptimizerState::for_size(ag.pi.params().size());
    // exp(-1e6) underflows to an exact zero weight
    const ActorStep s = actor_update(env, one_transition(0, false), Vec{-1000.0}, ag.pi, before, cfg, opt);
    EXPECT_TRUE(s.skipped);
    EXPECT_EQ(ag.pi.params(), before.params());
}

Dataset small_dataset(const std::string& env_name, std::size_t n) {
    const Environment env = make_benchmark(env_name);
    return generate(env, behavior_tier("medium", env), n, 3);
}

TEST(RunOffline, EpochAccountingAndDeterminism) {
    const Environment env = make_benchmark("chain5");
    const Dataset d = small_dataset("chain5", 300);
    OfflineConfig cfg;
    cfg.epochs = 4;
    cfg.batch = 64;
    cfg.lr = 0.01;
    AgentState a = make_agent(env, ModelConfig{}, 5), b = a;
    std::size_t seen = 0;
    const auto ha = run_offline(env, d, a, cfg, 11, [&](const OfflineEpoch& e, const AgentState&) {
        EXPECT_EQ(e.epoch, seen++);
        EXPECT_TRUE(std::isfinite(e.kl_to_prev));
        EXPECT_GE(e.kl_to_prev, 0.0);
    });
    EXPECT_EQ(ha.size(), 4u);
    run_offline(env, d, b, cfg, 11);
    EXPECT_EQ(a.pi.params(), b.pi.params());
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.v, b.v);
}

TEST(RunOffline, CriticLearnsOnBandit) {
    // Horizon 1: Q(s, a) regresses onto r(a) = +1 / -1.
    const Environment env = make_benchmark("bandit2");
    const Dataset d = small_dataset("bandit2", 200);
    OfflineConfig cfg;
    cfg.epochs = 300;
    cfg.batch = 200;
    cfg.lr = 0.05;
    cfg.gamma = 0.99;
    AgentState ag = make_agent(env, ModelConfig{}, 2);
    run_offline(env, d, ag, cfg, 1);
    const Vec q = forward(ag.q_spec, ag.q, env.encode(Vec{0.0}));
    EXPECT_NEAR(q[0], 1.0, 1e-2);
    EXPECT_NEAR(q[1], -1.0, 1e-2);
    EXPECT_GT(policy_table(ag.pi, env)(0, 0), 0.5);
}

TEST(RunOffline, MismatchedDatasetRejected) {
    const Environment env = make_benchmark("pointmass");
    AgentState ag = make_agent(env, ModelConfig{}, 1);
    EXPECT_THROW(run_offline(env, small_dataset("chain5", 10), ag, OfflineConfig{}, 0), InputError);
}

TEST(OfflineConfigCheck, Validation) {
    OfflineConfig c;
    EXPECT_EQ(c.kl_coef(), c.lambda);
    c.lambda = 0.0;
    EXPECT_THROW(c.validate(), InputError);
    c = OfflineConfig{};
    c.w_max = -1.0;
    EXPECT_THROW(c.validate(), InputError);
}

}  // namespace
}  // namespace coopo
