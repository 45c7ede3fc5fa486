#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "coopo/env.hpp"
#include "coopo/policy.hpp"
#include "coopo/rng.hpp"

namespace coopo {

struct Transition {
    Vec s;
    Vec a;
    double r = 0.0;
    Vec s2;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

/// Transitions stored column-wise. Tabular states and actions are stored as
/// one-element rows holding the index.
class TransitionTable {
public:
    TransitionTable() = default;
    TransitionTable(bool discrete, std::size_t state_dim, std::size_t action_dim);

    bool discrete() const { return discrete_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t size() const { return r_.size(); }
    bool empty() const { return r_.empty(); }

    void reserve(std::size_t n);
    /// Throws SchemaError when shapes disagree with the table.
    void push_back(const Transition& t);
    Transition at(std::size_t i) const;

    std::span<const double> s(std::size_t i) const { return {&s_[i * state_dim_], state_dim_}; }
    std::span<const double> a(std::size_t i) const { return {&a_[i * action_dim_], action_dim_}; }
    std::span<const double> s2(std::size_t i) const { return {&s2_[i * state_dim_], state_dim_}; }
    double r(std::size_t i) const { return r_[i]; }
    bool done(std::size_t i) const { return done_[i] != 0; }

    std::uint64_t checksum() const;
    bool operator==(const TransitionTable&) const = default;

private:
    bool discrete_ = false;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    Vec s_, a_, r_, s2_;
    std::vector<std::uint8_t> done_;
};

/// Behavior policy used to generate data: a base policy mixed with uniform
/// random actions with probability epsilon. Continuous bases also add
/// Gaussian noise of std kBehaviorNoise * sigma_factor.
struct BehaviorPolicyDescriptor {
    std::string base = "uniform";  ///< "uniform", "optimal" (tabular), "pd" (pointmass)
    double epsilon = 0.0;
    double sigma_factor = 1.0;
    std::string tier = "custom";

    void validate() const;
    nlohmann::json to_json() const;
    static BehaviorPolicyDescriptor from_json(const nlohmann::json& j);
    bool operator==(const BehaviorPolicyDescriptor&) const = default;
};

inline constexpr double kBehaviorNoise = 0.1;

/// Quality presets: expert (eps 0.05), medium (eps 0.3), random (eps 1.0),
/// around the DP-optimal policy (tabular) or a PD controller (pointmass).
BehaviorPolicyDescriptor behavior_tier(const std::string& tier, const Environment& env);

/// Behavior action at a state.
Vec behavior_action(const Environment& env, const BehaviorPolicyDescriptor& behavior,
                    const std::vector<std::size_t>& optimal_actions, std::span<const double> state, Rng& rng);

/// Probability table of a tabular behavior descriptor.
Matrix behavior_table(const TabularMdp& mdp, const BehaviorPolicyDescriptor& behavior);

/// Mean action of the pointmass PD controller (before noise and clamping).
Vec pd_action(const PointMassParams& p, std::span<const double> state);

struct DatasetMeta {
    std::string env;
    BehaviorPolicyDescriptor behavior;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
    DatasetMeta meta;
    TransitionTable data;

    std::size_t size() const { return data.size(); }
    std::uint64_t checksum() const { return data.checksum(); }
    bool operator==(const Dataset&) const = default;
};

/// Rollouts of the behavior policy, each truncated at the horizon, until
/// exactly n transitions exist. Pure function of its arguments.
Dataset generate(const Environment& env, const BehaviorPolicyDescriptor& behavior, std::size_t n,
                 std::uint64_t seed);

/// Uniform indices with replacement.
std::vector<std::size_t> sample_indices(std::size_t dataset_size, std::size_t batch_size, Rng& rng);
TransitionTable sample_batch(const Dataset& dataset, std::size_t batch_size, Rng& rng);
TransitionTable gather(const TransitionTable& table, std::span<const std::size_t> indices);

/// JSON Lines. Line 1: {"env","behavior","seed","n"}; then one
/// {"s","a","r","s2","done"} object per transition. Tabular states and
/// actions are integers, continuous ones arrays of reals.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Normalized visit frequencies of the transitions' source states.
Vec empirical_state_distribution(const Dataset& dataset, const TabularMdp& mdp);

}  // namespace coopo
