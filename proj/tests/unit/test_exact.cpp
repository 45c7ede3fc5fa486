#include <gtest/gtest.h>

#include <cmath>

#include "coopo/exact.hpp"
#include "coopo/theory.hpp"
#include "support.hpp"

namespace coopo {
namespace {

// Independent oracle: forward-propagated state marginals, J = sum_h gamma^h E[r_h].
double forward_J(const TabularMdp& m, const Matrix& pi) {
    Vec p = m.d0;
    double J = 0.0, disc = 1.0;
    for (std::size_t h = 0; h < m.horizon; ++h) {
        Vec next(m.n_states, 0.0);
        for (std::size_t s = 0; s < m.n_states; ++s)
            for (std::size_t a = 0; a < m.n_actions; ++a) {
                const double w = p[s] * pi(s, a);
                J += disc * w * m.reward(s, a);
                for (std::size_t t = 0; t < m.n_states; ++t) next[t] += w * m.prob(s, a, t);
            }
        p = next;
        disc *= m.gamma;
    }
    return J;
}

// Independent oracle: best J over all deterministic stationary policies.
double best_stationary_J(const TabularMdp& m) {
    std::size_t total = 1;
    for (std::size_t s = 0; s < m.n_states; ++s) total *= m.n_actions;
    double best = -1e300;
    for (std::size_t code = 0; code < total; ++code) {
        Matrix pi(m.n_states, m.n_actions, 0.0);
        std::size_t c = code;
        for (std::size_t s = 0; s < m.n_states; ++s, c /= m.n_actions) pi(s, c % m.n_actions) = 1.0;
        best = std::max(best, forward_J(m, pi));
    }
    return best;
}

TEST(ExactEval, MatchesForwardOracle) {
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        const TabularMdp m = random_mdp(2 + rng.uniform_index(4), 2 + rng.uniform_index(3), 0.8, 15, rng);
        const Matrix pi = random_policy(m.n_states, m.n_actions, rng);
        EXPECT_NEAR(exact_eval(m, pi).J, forward_J(m, pi), 1e-10);
    }
}

TEST(ExactEval, BellmanSelfConsistency) {
    Rng rng(4);
    const TabularMdp m = random_mdp(5, 3, 0.9, 25, rng);
    const Matrix pi = random_policy(5, 3, rng);
    const ExactEval e = exact_eval(m, pi);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 3; ++a) {
            double next = 0.0;
            for (std::size_t t = 0; t < 5; ++t) next += m.prob(s, a, t) * e.V_next[t];
            EXPECT_NEAR(e.Q(s, a), m.reward(s, a) + m.gamma * next, 1e-12);
        }
}

TEST(ExactEval, AdvantageCentered) {
    Rng rng(5);
    const TabularMdp m = random_mdp(4, 4, 0.95, 30, rng);
    const Matrix pi = random_policy(4, 4, rng);
    const ExactEval e = exact_eval(m, pi);
    for (std::size_t s = 0; s < 4; ++s) {
        double centered = 0.0;
        for (std::size_t a = 0; a < 4; ++a) centered += pi(s, a) * e.A(s, a);
        EXPECT_NEAR(centered, 0.0, 1e-10);
    }
}

TEST(ExactEval, GeometricSeriesLimit) {
    TabularMdp m = make_tabular_fixture("chain5");
    m.r.assign(m.r.size(), 1.0);
    m.gamma = 0.5;
    m.horizon = 200;
    const ExactEval e = exact_eval(m, uniform_policy(5, 2));
    for (double v : e.V) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(ExactEval, OneStepHorizon) {
    Rng rng(6);
    TabularMdp m = random_mdp(3, 2, 0.7, 1, rng);
    const Matrix pi = random_policy(3, 2, rng);
    const ExactEval e = exact_eval(m, pi);
    for (std::size_t s = 0; s < 3; ++s)
        EXPECT_NEAR(e.V[s], pi(s, 0) * m.reward(s, 0) + pi(s, 1) * m.reward(s, 1), 1e-15);
}

TEST(ExactEval, ZeroRewardGivesZero) {
    TabularMdp m = make_tabular_fixture("grid4x4");
    m.r.assign(m.r.size(), 0.0);
    EXPECT_EQ(exact_eval(m, uniform_policy(16, 4)).J, 0.0);
}

TEST(ValueIteration, DominatesStationaryPolicies) {
    Rng rng(7);
    for (int i = 0; i < 10; ++i) {
        const TabularMdp m = random_mdp(3, 2, 0.9, 12, rng);
        const double vi = value_iteration(m).J;
        EXPECT_GE(vi + 1e-12, best_stationary_J(m));
    }
    // chain5 is deterministic: always moving right is optimal among all policies.
    const TabularMdp c = make_tabular_fixture("chain5");
    EXPECT_NEAR(value_iteration(c).J, best_stationary_J(c), 1e-12);
}

TEST(ValueIteration, Chain5ByHand) {
    // Reach state 4 after 4 steps, then collect 1 per step for the remaining 16.
    const TabularMdp c = make_tabular_fixture("chain5");
    double j = 0.0;
    for (int h = 4; h < 20; ++h) j += std::pow(0.9, h);
    EXPECT_NEAR(value_iteration(c).J, j, 1e-12);
}

TEST(Occupancy, NormalizedAndMatchesMarginals) {
    const TabularMdp c = make_tabular_fixture("chain5");
    const Matrix pi = uniform_policy(5, 2);
    const Vec d = state_occupancy(c, pi, 1.0);
    double sum = 0.0;
    for (double x : d) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    // Time-averaged marginal from the forward recursion.
    Vec p = c.d0, avg(5, 0.0);
    for (std::size_t h = 0; h < c.horizon; ++h) {
        Vec next(5, 0.0);
        for (std::size_t s = 0; s < 5; ++s) {
            avg[s] += p[s] / c.horizon;
            for (std::size_t a = 0; a < 2; ++a)
                for (std::size_t t = 0; t < 5; ++t) next[t] += p[s] * 0.5 * c.prob(s, a, t);
        }
        p = next;
    }
    for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(d[s], avg[s], 1e-12);
}

TEST(TabularKernels, OmpMatchesSerial) {
    Rng rng(9);
    const TabularMdp m = random_mdp(40, 5, 0.9, 1, rng);
    const Matrix pi = random_policy(40, 5, rng);
    Vec vn(40);
    for (double& x : vn) x = rng.uniform();
    Vec q1(200), v1(40), q2(200), v2(40);
    kernels::set_threads(3);
    kernels::serial::policy_backup(m.view(), pi.data, 0.9, vn, q1, v1);
    kernels::omp::policy_backup(m.view(), pi.data, 0.9, vn, q2, v2);
    EXPECT_EQ(q1, q2);
    EXPECT_EQ(v1, v2);
    kernels::serial::optimal_backup(m.view(), 0.9, vn, q1, v1);
    kernels::omp::optimal_backup(m.view(), 0.9, vn, q2, v2);
    EXPECT_EQ(v1, v2);
    Vec n1(40), n2(40);
    kernels::serial::occupancy_step(m.view(), pi.data, m.d0, n1);
    kernels::omp::occupancy_step(m.view(), pi.data, m.d0, n2);
    for (std::size_t s = 0; s < 40; ++s) EXPECT_NEAR(n1[s], n2[s], 1e-15);
    kernels::set_threads(1);
}

}  // namespace
}  // namespace coopo
