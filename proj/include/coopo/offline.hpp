#pragma once

#include <functional>
#include <optional>

#include "coopo/dataset.hpp"
#include "coopo/optim.hpp"
#include "coopo/policy.hpp"

namespace coopo {

/// Actor and critics carried between phases and cycles.
struct AgentState {
    Policy pi;
    MlpSpec q_spec;
    ParameterVector q;
    MlpSpec v_spec;
    ParameterVector v;
};

AgentState make_agent(const Environment& env, const ModelConfig& cfg, std::uint64_t seed);

struct OfflineConfig {
    std::size_t epochs = 100;
    std::size_t batch = 512;
    double lambda = 0.05;
    /// Coefficient of the KL penalty; defaults to lambda.
    std::optional<double> kl_weight;
    double w_max = 20.0;
    double gamma = 0.99;
    double lr = 3e-4;

    double kl_coef() const { return kl_weight.value_or(lambda); }
    void validate() const;
};

/// Network inputs for the states of a batch (`next` selects s').
Matrix state_features(const Environment& env, const TransitionTable& batch, bool next = false);
/// Q-network inputs: the state features for tabular envs (one output per
/// action), features ++ action for continuous ones.
Matrix q_inputs(const Environment& env, const Matrix& features, const TransitionTable& batch);
/// Q(s_i, a_i) for every transition.
Vec q_values(const Environment& env, const MlpSpec& q_spec, std::span<const double> q, const TransitionTable& batch);
Vec v_values(const Environment& env, const MlpSpec& v_spec, std::span<const double> v, const TransitionTable& batch);

/// y = r + gamma E_{a' ~ pi(.|s')} Q(s', a'), y = r on done transitions.
/// Tabular: exact sum over a'. Continuous: one sample a' drawn from `rng`.
Vec td_target(const Environment& env, const TransitionTable& batch, const MlpSpec& q_spec,
              std::span<const double> q, const Policy& pi, double gamma, Rng& rng);

/// Mean squared error of Q(s_i, a_i) against y. Tabular Q outputs one column
/// per action; only the taken action's column gets a gradient.
BatchLoss q_regression_loss(const TransitionTable& batch, const Vec& y, bool discrete);
/// Mean squared error of a single-output network against y.
BatchLoss mse_loss(const Vec& y);

/// One Adam step of a regression; returns the pre-step loss.
double regression_step(const MlpSpec& spec, ParameterVector& params, OptimizerState& opt, const Matrix& inputs,
                       const BatchLoss& loss);

double update_q(const Environment& env, const TransitionTable& batch, const Vec& y, AgentState& agent,
                OptimizerState& opt);
double update_v(const Environment& env, const TransitionTable& batch, const Vec& y, AgentState& agent,
                OptimizerState& opt);

/// Q(s,a) - V(s) per transition.
Vec advantage_hat(const Environment& env, const AgentState& agent, const TransitionTable& batch);

/// AWAC weights min(exp(adv / lambda), w_max), evaluated in the log domain.
/// `clipped` (optional) receives how many weights hit w_max.
Vec awac_weights(std::span<const double> adv, double lambda, double w_max, std::size_t* clipped = nullptr);

/// -(1/n) sum w_i log pi(a_i|s_i) + kl_coef (1/n) sum KL(pi(.|s_i) || ref_i).
PolicyLoss awac_actor_loss(const TransitionTable& batch, const Vec& weights, const std::vector<ActionDist>& ref,
                           double kl_coef);

struct ActorStep {
    double loss = 0.0;
    double batch_kl = 0.0;  ///< mean KL(pi_new || ref) on the batch states after the step
    double batch_tv = 0.0;
    std::size_t clipped = 0;
    bool skipped = false;  ///< every weight was zero
};

ActorStep actor_update(const Environment& env, const TransitionTable& batch, std::span<const double> adv,
                       Policy& pi, const Policy& ref, const OfflineConfig& cfg, OptimizerState& opt);

struct OfflineEpoch {
    std::size_t epoch = 0;
    double q_loss = 0.0;
    double v_loss = 0.0;
    double policy_loss = 0.0;
    double kl_to_prev = 0.0;  ///< mean over the epoch's minibatches
    double tv_to_prev = 0.0;
    double adv_mean = 0.0;
    double adv_absmax = 0.0;
    std::size_t clipped_weights = 0;
    std::size_t skipped_steps = 0;
};

using OfflineObserver = std::function<void(const OfflineEpoch&, const AgentState&)>;

/// E epochs of ceil(|D| / batch) minibatches each:
/// sample -> td_target -> update_q -> update_v -> actor_update.
/// Optimizer moments start fresh for every call.
std::vector<OfflineEpoch> run_offline(const Environment& env, const Dataset& dataset, AgentState& agent,
                                      const OfflineConfig& cfg, std::uint64_t seed,
                                      const OfflineObserver& observer = {});

}  // namespace coopo
