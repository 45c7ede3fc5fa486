#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "coopo/env.hpp"
#include "support.hpp"

namespace coopo {
namespace {

TabularMdp two_state() {
    TabularMdp m;
    m.name = "two";
    m.n_states = 2;
    m.n_actions = 1;
    m.P = {0.3, 0.7, 0.5, 0.5};
    m.r = {0.0, 1.0};
    m.d0 = {1.0, 0.0};
    m.gamma = 0.9;
    m.horizon = 1000000;
    return m;
}

TEST(Fixtures, FilesMatchBuiltins) {
    for (const std::string name : {"chain5", "grid4x4", "bandit2"}) {
        const TabularMdp file = load_tabular(test::source_dir() / "fixtures" / (name + ".json"));
        const TabularMdp builtin = make_tabular_fixture(name);
        EXPECT_EQ(file.name, builtin.name);
        EXPECT_EQ(file.n_states, builtin.n_states);
        EXPECT_EQ(file.n_actions, builtin.n_actions);
        EXPECT_EQ(file.horizon, builtin.horizon);
        EXPECT_EQ(file.gamma, builtin.gamma);
        EXPECT_EQ(file.r, builtin.r);
        EXPECT_EQ(file.d0, builtin.d0);
        ASSERT_EQ(file.P.size(), builtin.P.size());
        for (std::size_t i = 0; i < file.P.size(); ++i) EXPECT_NEAR(file.P[i], builtin.P[i], 1e-15);
    }
}

TEST(Fixtures, Shapes) {
    const TabularMdp b = make_tabular_fixture("bandit2");
    EXPECT_EQ(b.n_states, 1u);
    EXPECT_EQ(b.n_actions, 2u);
    EXPECT_EQ(b.horizon, 1u);
    const TabularMdp c = make_tabular_fixture("chain5");
    EXPECT_EQ(c.n_states, 5u);
    EXPECT_EQ(c.n_actions, 2u);
    EXPECT_EQ(c.reward(4, 1), 1.0);
    const TabularMdp g = make_tabular_fixture("grid4x4");
    EXPECT_EQ(g.n_states, 16u);
    EXPECT_EQ(g.n_actions, 4u);
    EXPECT_EQ(g.reward(15, 0), 1.0);
}

TEST(Fixtures, RowsAreStochastic) {
    for (const std::string name : {"chain5", "grid4x4", "bandit2"}) {
        const TabularMdp m = load_tabular(test::source_dir() / "fixtures" / (name + ".json"));
        for (std::size_t s = 0; s < m.n_states; ++s)
            for (std::size_t a = 0; a < m.n_actions; ++a) {
                double sum = 0.0;
                for (double p : m.next_dist(s, a)) sum += p;
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
    }
}

TEST(Fixtures, NonStochasticRowRejected) {
    nlohmann::json j = to_json(make_tabular_fixture("chain5"));
    j["P"][0][0][0] = 0.9;
    EXPECT_THROW(tabular_from_json(j), Error);
    nlohmann::json k = to_json(make_tabular_fixture("chain5"));
    k["P"].erase(0);
    EXPECT_THROW(tabular_from_json(k), SchemaError);
}

TEST(Fixtures, JsonRoundTrip) {
    const auto dir = test::scratch_dir("fixture_rt");
    const TabularMdp g = make_tabular_fixture("grid4x4");
    save_tabular(g, dir / "g.json");
    const TabularMdp back = load_tabular(dir / "g.json");
    EXPECT_EQ(back.P, g.P);
    EXPECT_EQ(back.r, g.r);
}

TEST(Tabular, DegenerateStartDistribution) {
    Environment env = make_benchmark("chain5");
    for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_EQ(env.reset(seed)[0], 0.0);
}

TEST(Tabular, UniformStartIsReproducible) {
    TabularMdp m = make_tabular_fixture("chain5");
    m.n_states = 4;
    m.n_actions = 1;
    m.P.assign(16, 0.25);
    m.r.assign(4, 0.0);
    m.d0 = {0.25, 0.25, 0.25, 0.25};
    Environment a = Environment::tabular(m), b = Environment::tabular(m);
    for (std::uint64_t seed = 0; seed < 30; ++seed) EXPECT_EQ(a.reset(seed), b.reset(seed));
}

TEST(Tabular, DeterministicChainMovesRight) {
    Environment env = make_benchmark("chain5");
    env.reset(0);
    for (double s = 1; s <= 4; ++s) EXPECT_EQ(env.step(Vec{1.0}).next_state[0], s);
}

TEST(Tabular, TransitionFrequenciesMatchP) {
    const TabularMdp m = two_state();
    Rng rng(3);
    constexpr std::size_t n = 100000;
    std::size_t to_zero = 0;
    for (std::size_t i = 0; i < n; ++i) to_zero += tabular_step(m, 0, Vec{0.0}, rng, 0).next_state[0] == 0.0;
    const double sigma = std::sqrt(0.3 * 0.7 / n);
    EXPECT_NEAR(static_cast<double>(to_zero) / n, 0.3, 3 * sigma);
}

TEST(Tabular, EpisodeNeverExceedsHorizon) {
    for (const std::string name : {"chain5", "grid4x4", "bandit2"}) {
        Environment env = make_benchmark(name);
        Rng rng(1);
        for (std::uint64_t ep = 0; ep < 20; ++ep) {
            env.reset(ep);
            std::size_t steps = 0;
            bool done = false;
            while (!done) {
                done = env.step(Vec{static_cast<double>(rng.uniform_index(env.n_actions()))}).done;
                ++steps;
            }
            EXPECT_EQ(steps, env.horizon());
        }
    }
}

TEST(Tabular, InvalidActionAndStateRejected) {
    Environment env = make_benchmark("chain5");
    env.reset(0);
    EXPECT_THROW(env.step(Vec{2.0}), InputError);
    EXPECT_THROW(env.encode(Vec{5.0}), InputError);
    EXPECT_THROW(env.encode(Vec{-1.0}), InputError);
}

TEST(Tabular, OneHotEncoding) {
    const Environment env = make_benchmark("chain5");
    EXPECT_EQ(env.encode(Vec{3.0}), (Vec{0, 0, 0, 1, 0}));
}

TEST(PointMass, RewardZeroAtGoalAtRest) {
    const PointMassParams p;
    const Vec s{p.goal[0], p.goal[1], 0.0, 0.0};
    EXPECT_NEAR(pointmass_reward(p, s, Vec{0.0, 0.0}), 0.0, 1e-15);
}

TEST(PointMass, RewardNonPositiveAndDynamicsDeterministic) {
    const PointMassParams p;
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const Vec s{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec a{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        EXPECT_LE(pointmass_reward(p, s, a), 0.0);
        EXPECT_EQ(pointmass_next(p, s, a), pointmass_next(p, s, a));
    }
}

TEST(PointMass, SemiImplicitEulerByHand) {
    const PointMassParams p;
    const Vec s{0.0, 0.0, 1.0, 0.0};
    const Vec next = pointmass_next(p, s, Vec{0.5, -0.5});
    EXPECT_NEAR(next[2], 1.05, 1e-15);
    EXPECT_NEAR(next[3], -0.05, 1e-15);
    EXPECT_NEAR(next[0], 0.105, 1e-15);
    EXPECT_NEAR(next[1], -0.005, 1e-15);
}

TEST(PointMass, ActionsClampedToLimit) {
    const PointMassParams p;
    const Vec s{0.0, 0.0, 0.0, 0.0};
    EXPECT_EQ(pointmass_next(p, s, Vec{5.0, -5.0}), pointmass_next(p, s, Vec{1.0, -1.0}));
}

TEST(PointMass, EpisodeLengthIsHorizon) {
    Environment env = make_benchmark("pointmass");
    env.reset(2);
    std::size_t steps = 0;
    while (!env.step(Vec{0.1, 0.1}).done) ++steps;
    EXPECT_EQ(steps + 1, env.horizon());
}

TEST(Benchmarks, UnknownNameRejected) { EXPECT_THROW(make_benchmark("cartpole"), InputError); }

}  // namespace
}  // namespace coopo
