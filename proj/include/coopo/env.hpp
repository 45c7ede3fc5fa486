#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "coopo/common.hpp"
#include "coopo/kernels.hpp"
#include "coopo/rng.hpp"

namespace coopo {

/// Finite MDP with explicit arrays. `horizon` is the episode length in steps
/// (h = 0 .. horizon-1); it is unrelated to the effective horizon 1/(1-gamma).
struct TabularMdp {
    std::string name;
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Vec P;   ///< [S][A][S']
    Vec r;   ///< [S][A]
    Vec d0;  ///< [S]
    double gamma = 0.99;
    std::size_t horizon = 1;

    double prob(std::size_t s, std::size_t a, std::size_t t) const { return P[(s * n_actions + a) * n_states + t]; }
    double reward(std::size_t s, std::size_t a) const { return r[s * n_actions + a]; }
    std::span<const double> next_dist(std::size_t s, std::size_t a) const {
        return {P.data() + (s * n_actions + a) * n_states, n_states};
    }
    kernels::TabularView view() const { return {n_states, n_actions, P, r}; }

    /// Row-stochastic P and d0 within 1e-12, finite rewards, gamma in [0,1), horizon >= 1.
    void validate() const;
};

inline constexpr double kStochasticTol = 1e-12;

TabularMdp tabular_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TabularMdp& m);
TabularMdp load_tabular(const std::filesystem::path& path);
void save_tabular(const TabularMdp& m, const std::filesystem::path& path);

/// 2-D point mass, state (x, y, vx, vy). Semi-implicit Euler:
/// v' = v + a dt, p' = p + v' dt. Reward uses the post-step position:
/// -|p' - goal|^2 - action_cost |a|^2, with a the clamped action.
struct PointMassParams {
    double dt = 0.1;
    double accel_limit = 1.0;
    std::array<double, 2> goal{1.0, 0.5};
    std::size_t horizon = 50;
    double start_spread = 0.1;
    double action_cost = 0.01;
    double gamma = 0.99;
};

Vec pointmass_next(const PointMassParams& p, std::span<const double> state, std::span<const double> action);
double pointmass_reward(const PointMassParams& p, std::span<const double> state, std::span<const double> action);

struct StepResult {
    Vec next_state;
    double reward = 0.0;
    bool done = false;
    std::size_t step_index = 0;  ///< steps taken so far in this episode
};

/// Tabular states/actions are carried as one-element vectors holding the index.
class Environment {
public:
    static Environment tabular(TabularMdp mdp);
    static Environment pointmass(PointMassParams params, std::string name = "pointmass");

    const std::string& name() const { return name_; }
    bool discrete() const { return std::holds_alternative<TabularMdp>(model_); }
    const TabularMdp& mdp() const;
    const PointMassParams& pointmass_params() const;

    std::size_t state_dim() const;
    std::size_t action_dim() const;
    /// Discrete action count; 0 for continuous environments.
    std::size_t n_actions() const;
    /// Width of the network input encoding a state (one-hot for tabular).
    std::size_t feature_dim() const;
    std::size_t horizon() const;
    double gamma() const;

    void encode(std::span<const double> state, std::span<double> out) const;
    Vec encode(std::span<const double> state) const;

    Vec reset(std::uint64_t seed);
    StepResult step(std::span<const double> action);

    const Vec& state() const { return state_; }
    std::size_t step_index() const { return step_; }

private:
    std::string name_;
    std::variant<TabularMdp, PointMassParams> model_;
    Vec state_;
    std::size_t step_ = 0;
    Rng rng_;
};

/// Tabular transition from (s, a); the rng supplies the next-state draw.
StepResult tabular_step(const TabularMdp& m, std::size_t s, std::span<const double> action, Rng& rng,
                        std::size_t step_index);

/// chain5, grid4x4, bandit2 (tabular) or pointmass.
Environment make_benchmark(const std::string& name);
TabularMdp make_tabular_fixture(const std::string& name);

}  // namespace coopo
