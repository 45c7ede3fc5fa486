#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "coopo/optim.hpp"
#include "coopo/policy.hpp"
#include "support.hpp"

namespace coopo {
namespace {

ActionDist cat(Vec p) { return ActionDist::categorical_from_probs(p); }
ActionDist gauss(double mu, double log_std) { return ActionDist::gaussian(Vec{mu}, Vec{log_std}); }

Vec random_simplex(std::size_t n, Rng& rng) {
    Vec p(n);
    double total = 0.0;
    for (double& x : p) total += (x = rng.uniform() + 1e-3);
    for (double& x : p) x /= total;
    return p;
}

TEST(Distributions, LogProb) {
    EXPECT_NEAR(log_prob(cat({0.5, 0.5}), Vec{0.0}), -0.6931471805599453, 1e-15);
    EXPECT_NEAR(log_prob(gauss(0, 0), Vec{0.0}), -0.9189385332046727, 1e-15);
    EXPECT_NEAR(log_prob(gauss(0, 0), Vec{1.0}), -1.4189385332046727, 1e-15);
}

TEST(Distributions, Kl) {
    EXPECT_EQ(kl(cat({0.3, 0.7}), cat({0.3, 0.7})), 0.0);
    const double p0 = 0.8808, p1 = 0.1192;
    const double direct = p0 * std::log(p0 / 0.5) + p1 * std::log(p1 / 0.5);
    EXPECT_NEAR(kl(cat({p0, p1}), cat({0.5, 0.5})), direct, 1e-15);
    EXPECT_NEAR(direct, 0.3278, 1e-4);
    EXPECT_NEAR(kl(gauss(0, 0), gauss(1, 0)), 0.5, 1e-15);
    EXPECT_THROW(kl(cat({0.5, 0.5}), gauss(0, 0)), InputError);
}

TEST(Distributions, Tv) {
    EXPECT_EQ(tv(cat({0.2, 0.8}), cat({0.2, 0.8})), 0.0);
    EXPECT_NEAR(tv(cat({0.8808, 0.1192}), cat({0.5, 0.5})), 0.3808, 1e-12);
}

TEST(Distributions, Entropy) {
    EXPECT_NEAR(entropy(cat({0.25, 0.25, 0.25, 0.25})), std::log(4.0), 1e-15);
    EXPECT_EQ(entropy(cat({1.0, 0.0})), 0.0);
    EXPECT_NEAR(entropy(gauss(0, 0)), 0.5 * std::log(2 * std::numbers::pi * std::numbers::e), 1e-15);
}

TEST(Distributions, KlNonNegativeAndPinsker) {
    Rng rng(12);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t n = 2 + rng.uniform_index(5);
        const ActionDist p = cat(random_simplex(n, rng)), q = cat(random_simplex(n, rng));
        const double k = kl(p, q);
        EXPECT_GE(k, 0.0);
        EXPECT_LE(tv(p, q), std::sqrt(k / 2.0) + 1e-12);
    }
}

TEST(Distributions, Sampling) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample(cat({1.0, 0.0}), rng)[0], 0.0);
    const ActionDist sharp = gauss(0.7, -50.0);
    EXPECT_NEAR(sample(sharp, rng)[0], 0.7, 1e-3);
    const ActionDist g = gauss(0.3, std::log(2.0));
    constexpr int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample(g, rng)[0];
    EXPECT_NEAR(sum / n, 0.3, 3 * 2.0 / std::sqrt(n));
}

TEST(Distributions, LogStdClamp) {
    EXPECT_EQ(clamp_log_std(-100.0), std::log(kMinStd));
    EXPECT_EQ(clamp_log_std(100.0), std::log(kMaxStd));
    EXPECT_EQ(clamp_log_std(0.1), 0.1);
}

TEST(Policy, SoftmaxNormalizedOnFixtures) {
    for (const std::string name : {"chain5", "grid4x4", "bandit2"}) {
        const Environment env = make_benchmark(name);
        for (bool direct : {true, false}) {
            ModelConfig m;
            m.tabular_direct = direct;
            m.hidden_units = 8;
            const Matrix t = policy_table(make_policy(env, m, 3), env);
            for (std::size_t s = 0; s < t.rows; ++s) {
                double sum = 0.0;
                for (double p : t.row(s)) sum += p;
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
        }
    }
}

TEST(Policy, GaussianParameterLayout) {
    const Environment env = make_benchmark("pointmass");
    ModelConfig m;
    m.hidden_units = 8;
    const Policy pi = make_policy(env, m, 1);
    EXPECT_EQ(pi.family(), PolicyFamily::gaussian);
    EXPECT_EQ(pi.params().size(), pi.net().parameter_count() + 2);
    for (double ls : pi.log_std()) EXPECT_DOUBLE_EQ(ls, std::log(0.5));
}

// d/dtheta of sum_i log pi(a_i|s_i) against central differences.
void check_log_prob_grad(const Environment& env, const ModelConfig& m, std::uint64_t seed) {
    const Policy pi = make_policy(env, m, seed);
    Rng rng(seed);
    const TransitionTable batch = test::random_batch(env, 9, rng);
    Matrix feats(batch.size(), env.feature_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) env.encode(batch.s(i), feats.row(i));
    const PolicyLoss loss = [&](const Matrix& out, std::span<const double> log_std, Matrix& d_out,
                                std::span<double> d_ls) {
        double total = 0.0;
        for (std::size_t i = 0; i < out.rows; ++i) {
            if (env.discrete()) {
                Vec lp(out.cols);
                log_softmax(out.row(i), lp);
                const auto a = static_cast<std::size_t>(batch.a(i)[0]);
                total += lp[a];
                log_softmax_grad(out.row(i), a, d_out.row(i), 1.0);
            } else {
                total += gaussian_log_prob(out.row(i), log_std, batch.a(i));
                for (std::size_t d = 0; d < out.cols; ++d) {
                    const double z = (batch.a(i)[d] - out(i, d)) * std::exp(-log_std[d]);
                    d_out(i, d) = z * std::exp(-log_std[d]);
                    d_ls[d] += z * z - 1.0;
                }
            }
        }
        return total;
    };
    const LossGrad lg = policy_grad(pi, feats, loss);
    auto objective = [&](std::span<const double> theta) {
        Policy p = pi;
        std::copy(theta.begin(), theta.end(), p.params().begin());
        return policy_loss_value(p, feats, loss);
    };
    const auto r = finite_diff_check(objective, pi.params(), lg.grad, 1e-4, seed);
    EXPECT_TRUE(r.pass) << env.name() << " rel " << r.max_rel_error;
}

TEST(Policy, LogProbGradient) {
    ModelConfig m;
    m.hidden_units = 6;
    m.activation = Activation::tanh;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        check_log_prob_grad(make_benchmark("pointmass"), m, seed);
        m.tabular_direct = seed % 2 == 0;
        check_log_prob_grad(make_benchmark("grid4x4"), m, seed);
    }
}

}  // namespace
}  // namespace coopo
