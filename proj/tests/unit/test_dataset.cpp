#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "coopo/dataset.hpp"
#include "coopo/exact.hpp"
#include "support.hpp"

namespace coopo {
namespace {

BehaviorPolicyDescriptor uniform_behavior(const Environment& env) {
    BehaviorPolicyDescriptor b = behavior_tier("random", env);
    EXPECT_EQ(b.epsilon, 1.0);
    return b;
}

double l1(const Vec& a, const Vec& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

TEST(Generate, UniformBanditSplit) {
    const Environment env = make_benchmark("bandit2");
    const Dataset d = generate(env, uniform_behavior(env), 1000, 4);
    ASSERT_EQ(d.size(), 1000u);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < d.size(); ++i) zeros += d.data.a(i)[0] == 0.0;
    EXPECT_NEAR(static_cast<double>(zeros), 500.0, 3 * std::sqrt(250.0));
}

TEST(Generate, GreedyOnDeterministicChainRepeats) {
    const Environment env = make_benchmark("chain5");
    BehaviorPolicyDescriptor b = behavior_tier("expert", env);
    b.epsilon = 0.0;
    const Dataset d = generate(env, b, 60, 1);
    const std::size_t H = env.horizon();
    for (std::size_t i = H; i < d.size(); ++i) EXPECT_EQ(d.data.at(i), d.data.at(i % H));
}

TEST(Generate, PureFunctionOfArguments) {
    const Environment env = make_benchmark("pointmass");
    const auto b = behavior_tier("medium", env);
    EXPECT_EQ(generate(env, b, 300, 9), generate(env, b, 300, 9));
    EXPECT_NE(generate(env, b, 300, 9).checksum(), generate(env, b, 300, 10).checksum());
}

TEST(Generate, PointmassActionsWithinLimit) {
    const Environment env = make_benchmark("pointmass");
    const Dataset d = generate(env, behavior_tier("random", env), 500, 2);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (double a : d.data.a(i)) EXPECT_LE(std::abs(a), env.pointmass_params().accel_limit);
}

TEST(Generate, TiersOrderedByQuality) {
    const Environment env = make_benchmark("chain5");
    auto mean_reward = [&](const std::string& tier) {
        const Dataset d = generate(env, behavior_tier(tier, env), 4000, 3);
        double r = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) r += d.data.r(i);
        return r / static_cast<double>(d.size());
    };
    EXPECT_GT(mean_reward("expert"), mean_reward("medium"));
    EXPECT_GT(mean_reward("medium"), mean_reward("random"));
    EXPECT_THROW(behavior_tier("legendary", env), InputError);
}

TEST(Sampling, UniformWithReplacement) {
    Rng rng(1);
    std::vector<std::size_t> counts(10, 0);
    constexpr std::size_t draws = 100000;
    for (std::size_t i = 0; i < draws / 10; ++i)
        for (std::size_t idx : sample_indices(10, 10, rng)) ++counts[idx];
    for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c), draws / 10.0, 3 * std::sqrt(draws * 0.09));
}

TEST(Io, RoundTripIsIdentical) {
    const auto dir = test::scratch_dir("dataset_io");
    for (const std::string name : {"chain5", "pointmass"}) {
        const Environment env = make_benchmark(name);
        const Dataset d = generate(env, behavior_tier("medium", env), 3, 5);
        save_dataset(d, dir / (name + ".jsonl"));
        const Dataset back = load_dataset(dir / (name + ".jsonl"));
        EXPECT_EQ(back, d);
        EXPECT_EQ(back.checksum(), d.checksum());
    }
}

TEST(Io, EmptyAfterHeaderIsSchemaError) {
    const auto dir = test::scratch_dir("dataset_empty");
    const Environment env = make_benchmark("chain5");
    save_dataset(generate(env, behavior_tier("medium", env), 3, 5), dir / "d.jsonl");
    std::ifstream in(dir / "d.jsonl");
    std::string header;
    std::getline(in, header);
    std::ofstream(dir / "e.jsonl") << header << '\n';
    EXPECT_THROW(load_dataset(dir / "e.jsonl"), SchemaError);
    std::ofstream(dir / "z.jsonl").close();
    EXPECT_THROW(load_dataset(dir / "z.jsonl"), SchemaError);
}

TEST(Io, MalformedLineIsParseError) {
    const auto dir = test::scratch_dir("dataset_bad");
    const Environment env = make_benchmark("chain5");
    save_dataset(generate(env, behavior_tier("medium", env), 3, 5), dir / "d.jsonl");
    std::ofstream(dir / "d.jsonl", std::ios::app) << "{not json\n";
    EXPECT_THROW(load_dataset(dir / "d.jsonl"), ParseError);
}

TEST(Io, MissingFileIsInputError) { EXPECT_THROW(load_dataset("/nonexistent/d.jsonl"), InputError); }

TEST(StateDistribution, SingleStateCases) {
    const Environment bandit = make_benchmark("bandit2");
    EXPECT_EQ(empirical_state_distribution(generate(bandit, uniform_behavior(bandit), 50, 1), bandit.mdp()),
              (Vec{1.0}));
    const Environment chain = make_benchmark("chain5");
    BehaviorPolicyDescriptor b = behavior_tier("expert", chain);
    b.epsilon = 1.0;
    Dataset d = generate(chain, b, 10, 1);
    TransitionTable only0(true, 1, 1);
    for (std::size_t i = 0; i < 4; ++i) only0.push_back({{0.0}, {0.0}, 0.0, {0.0}, false});
    d.data = only0;
    d.meta.n = 4;
    EXPECT_EQ(empirical_state_distribution(d, chain.mdp()), (Vec{1, 0, 0, 0, 0}));
}

TEST(StateDistribution, ConvergesToExactOccupancy) {
    const Environment env = make_benchmark("chain5");
    const auto b = uniform_behavior(env);
    const Vec exact = state_occupancy(env.mdp(), behavior_table(env.mdp(), b), 1.0);
    EXPECT_LT(l1(empirical_state_distribution(generate(env, b, 100000, 1), env.mdp()), exact), 0.02);

    // L1 error shrinks roughly like 1/sqrt(N); averaged over seeds to damp noise.
    Vec err;
    for (std::size_t n : {1000u, 4000u, 16000u}) {
        double e = 0.0;
        for (std::uint64_t seed = 0; seed < 8; ++seed)
            e += l1(empirical_state_distribution(generate(env, b, n, seed), env.mdp()), exact);
        err.push_back(e / 8.0);
    }
    EXPECT_LT(err[1], 0.8 * err[0]);
    EXPECT_LT(err[2], 0.8 * err[1]);
}

TEST(Behavior, DescriptorJsonRoundTrip) {
    const Environment env = make_benchmark("pointmass");
    const auto b = behavior_tier("expert", env);
    EXPECT_EQ(BehaviorPolicyDescriptor::from_json(b.to_json()), b);
    EXPECT_TRUE(b.to_json().at("stand_in").get<bool>());
}

}  // namespace
}  // namespace coopo
