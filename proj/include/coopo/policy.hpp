#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>

#include "coopo/env.hpp"
#include "coopo/mlp.hpp"
#include "coopo/rng.hpp"

namespace coopo {

enum class PolicyFamily { categorical, gaussian };

inline constexpr double kMinStd = 1e-4;
inline constexpr double kMaxStd = 10.0;

/// Action distribution at one state.
struct ActionDist {
    PolicyFamily family = PolicyFamily::categorical;
    Vec probs;      ///< categorical
    Vec log_probs;  ///< categorical, computed by log-softmax
    Vec mean;       ///< gaussian
    Vec log_std;    ///< gaussian, already clamped to [log kMinStd, log kMaxStd]

    static ActionDist categorical_from_logits(std::span<const double> logits);
    /// Entries must be >= 0 and sum to 1; zeros get log-probability -inf.
    static ActionDist categorical_from_probs(std::span<const double> probs);
    static ActionDist gaussian(std::span<const double> mean, std::span<const double> log_std);
};

double log_prob(const ActionDist& d, std::span<const double> action);
/// KL(p || q) in closed form. Throws InputError on family or dimension mismatch.
double kl(const ActionDist& p, const ActionDist& q);
/// Exact for categorical; for Gaussians the Pinsker bound min(1, sqrt(KL/2)).
double tv(const ActionDist& p, const ActionDist& q);
double entropy(const ActionDist& d);
/// Categorical: one-element vector holding the index. Gaussian: mean + std * z.
Vec sample(const ActionDist& d, Rng& rng);

/// Number of times a log-std was clamped into [log kMinStd, log kMaxStd].
std::uint64_t std_clamp_count();
double clamp_log_std(double log_std);

/// Network hyperparameters shared by actor and critics.
struct ModelConfig {
    std::size_t hidden_layers = 2;
    std::size_t hidden_units = 64;
    Activation activation = Activation::relu;
    /// Tabular environments get a linear map from the one-hot state (no hidden layers).
    bool tabular_direct = true;
    double init_log_std = std::log(0.5);
};

/// Categorical policy over network logits, or diagonal Gaussian with a network
/// mean and state-independent log-std. The parameter vector holds the network
/// parameters followed (Gaussian only) by one log-std per action dimension.
class Policy {
public:
    static Policy categorical(MlpSpec net, ParameterVector params);
    static Policy gaussian(MlpSpec net, ParameterVector params, std::size_t action_dim);

    PolicyFamily family() const { return family_; }
    const MlpSpec& net() const { return net_; }
    const ParameterVector& params() const { return params_; }
    ParameterVector& params() { return params_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t extra_count() const { return family_ == PolicyFamily::gaussian ? action_dim_ : 0; }

    std::span<const double> net_params() const { return {params_.data(), net_.parameter_count()}; }
    std::span<const double> log_std() const;

    ActionDist dist(std::span<const double> features) const;
    std::vector<ActionDist> dists(const Matrix& features) const;
    /// Gaussian mean or categorical arg-max (lowest index on ties).
    Vec mode(std::span<const double> features) const;

private:
    PolicyFamily family_ = PolicyFamily::categorical;
    MlpSpec net_;
    ParameterVector params_;
    std::size_t action_dim_ = 0;
};

Policy make_policy(const Environment& env, const ModelConfig& cfg, std::uint64_t seed);
MlpSpec value_net_spec(const Environment& env, const ModelConfig& cfg);
/// Q over (state features) -> one output per action for discrete envs,
/// (state features ++ action) -> 1 output for continuous envs.
MlpSpec q_net_spec(const Environment& env, const ModelConfig& cfg);

/// Loss on the policy head. Receives the network outputs (logits or means)
/// and the clamped log-stds; writes dL/doutputs and dL/dlog_std.
using PolicyLoss = std::function<double(const Matrix& outputs, std::span<const double> log_std, Matrix& d_outputs,
                                        std::span<double> d_log_std)>;

/// Gradient over the full policy parameter vector (network ++ log-std).
/// The log-std gradient is zero on clamped dimensions.
LossGrad policy_grad(const Policy& policy, const Matrix& features, const PolicyLoss& loss);
double policy_loss_value(const Policy& policy, const Matrix& features, const PolicyLoss& loss);

/// Row helpers shared by the losses.
void log_softmax(std::span<const double> logits, std::span<double> out);
/// d log pi(a) / d logits = onehot(a) - softmax(logits).
void log_softmax_grad(std::span<const double> logits, std::size_t action, std::span<double> out, double scale);
double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std, std::span<const double> a);

/// Probability table [S][A] of a categorical policy on a tabular environment.
Matrix policy_table(const Policy& policy, const Environment& env);

}  // namespace coopo
