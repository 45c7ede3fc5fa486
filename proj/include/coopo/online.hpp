#pragma once

#include <functional>
#include <limits>
#include <optional>

#include "coopo/offline.hpp"

namespace coopo {

struct OnlineConfig {
    /// Collection iterations T per online phase.
    std::size_t episodes = 5;
    /// Trajectories gathered per iteration.
    std::size_t rollout_episodes = 5;
    std::size_t batch = 64;
    double clip = 0.2;
    std::size_t epochs_per_update = 5;
    double gamma = 0.99;
    double lr = 3e-4;
    bool adv_normalize = true;
    bool gae = false;
    double gae_lambda = 0.95;
    /// Total environment steps allowed over a whole run (all cycles).
    std::optional<std::size_t> total_step_budget;

    void validate() const;
};

struct RolloutStep {
    Vec s;
    Vec a;
    double r = 0.0;
    double logp_old = 0.0;
    double v_old = 0.0;
};

struct RolloutBuffer {
    std::vector<std::vector<RolloutStep>> trajectories;
    Vec rtg;  ///< flattened in trajectory order
    Vec adv;

    std::size_t step_count() const;
    const RolloutStep& step(std::size_t flat_index) const;
    /// Undiscounted return of each trajectory.
    Vec episode_returns() const;
};

/// Trajectories from reset to done with the current policy. log pi and V are
/// cached per step. Collection stops early once `max_steps` steps exist; the
/// trajectory in progress is then cut short.
RolloutBuffer collect(Environment& env, const Policy& pi, const MlpSpec& v_spec, std::span<const double> v,
                      std::size_t n_episodes, std::uint64_t seed,
                      std::size_t max_steps = std::numeric_limits<std::size_t>::max());

/// R_h = r_h + gamma R_{h+1}. Throws InputError when longer than `horizon`.
Vec reward_to_go(std::span<const double> rewards, double gamma, std::size_t horizon);

/// Fills buffer.rtg and buffer.adv. adv = rtg - V_old (or GAE when enabled),
/// standardized when `normalize` (std floored at 1e-8).
void compute_advantages(RolloutBuffer& buffer, const OnlineConfig& cfg, std::size_t horizon);

/// Per-sample clipped objective min(c A, clip(c, 1-eps, 1+eps) A).
double clipped_objective(double ratio, double adv, double clip);

struct PpoStats {
    double objective = 0.0;  ///< mean clipped objective over included samples
    double fraction_clipped = 0.0;
    std::size_t excluded = 0;  ///< samples with |logp - logp_old| > kMaxLogRatio
    std::size_t included = 0;
};

inline constexpr double kMaxLogRatio = 20.0;

/// Loss = -mean clipped objective over the rows. Rows hold the actions,
/// old log-probs and advantages in the same order as the network inputs.
PolicyLoss ppo_surrogate_loss(const Matrix& actions, std::span<const double> logp_old, std::span<const double> adv,
                              double clip, PpoStats* stats = nullptr);

/// epochs_per_update shuffled minibatch passes over the buffer.
PpoStats ppo_actor_update(const Environment& env, const RolloutBuffer& buffer, Policy& pi, const OnlineConfig& cfg,
                          OptimizerState& opt, Rng& rng);
/// Same passes for the V regression to the reward-to-go. Returns the mean loss.
double value_update(const Environment& env, const RolloutBuffer& buffer, AgentState& agent, const OnlineConfig& cfg,
                    OptimizerState& opt, Rng& rng);

struct OnlineIteration {
    std::size_t iteration = 0;
    double mean_return = 0.0;  ///< undiscounted, over this iteration's trajectories
    double policy_loss = 0.0;
    double v_loss = 0.0;
    double kl_to_prev = 0.0;  ///< mean KL(pi_new || pi_old) over the buffer states
    double tv_to_prev = 0.0;
    double adv_mean = 0.0;    ///< before normalization
    double adv_absmax = 0.0;  ///< before normalization
    double fraction_clipped = 0.0;
    std::size_t excluded = 0;
    std::size_t env_steps = 0;
    std::size_t trajectories = 0;
};

using OnlineObserver = std::function<void(const OnlineIteration&, const AgentState&)>;

struct OnlineResult {
    std::vector<OnlineIteration> iterations;
    std::size_t env_steps = 0;
    std::size_t trajectories = 0;
};

/// T iterations of collect -> reward-to-go -> advantages -> PPO -> V
/// regression. The Q parameters are never touched. Stops once `step_allowance`
/// steps have been collected.
OnlineResult run_online(Environment& env, AgentState& agent, const OnlineConfig& cfg, std::uint64_t seed,
                        std::size_t step_allowance = std::numeric_limits<std::size_t>::max(),
                        const OnlineObserver& observer = {});

}  // namespace coopo
