#pragma once

#include <optional>

#include "coopo/cycle.hpp"
#include "coopo/exact.hpp"

namespace coopo {

/// pi*(a|s) = pi_old(a|s) exp(A(s,a)/lambda) / Z(s), computed in log space.
struct AwacSolution {
    Matrix pi;
    Vec log_Z;
};

AwacSolution awac_closed_form(const Matrix& pi_old, const Matrix& adv, double lambda);

/// Per-state KL(p || q) and TV(p, q) between policy tables.
Vec kl_per_state(const Matrix& p, const Matrix& q);
Vec tv_per_state(const Matrix& p, const Matrix& q);

/// |E_{pi*}[A] - (lambda KL(pi* || pi_old) + lambda log Z)| per state, with
/// every term evaluated from its definition.
Vec lemma1_residuals(const Matrix& pi_old, const Matrix& adv, double lambda);

struct Concentrability {
    double C = 0.0;
    bool infinite = false;
    std::size_t offending_state = 0;  ///< meaningful when infinite
};

/// max_s d(s) / rho(s); infinite when d(s) > 0 on a state with rho(s) = 0.
Concentrability concentrability(const Vec& d_pi, const Vec& rho);
/// Exact discounted state distributions of both policies.
Concentrability concentrability(const TabularMdp& mdp, const Matrix& pi, const Matrix& pi_beta);
/// Empirical dataset state frequencies as rho.
Concentrability concentrability(const TabularMdp& mdp, const Matrix& pi, const Dataset& dataset);

struct BoundReport {
    std::size_t k = 0;
    double G_off = 0.0;
    double eps_adv = 0.0;
    double eps_k = 0.0;
    double zeta_k = 0.0;
    double alpha_k = 0.0;
    double Lambda_k = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool satisfied = false;
    double lambda = 0.0;
    double J_k = 0.0;
    double J_half = 0.0;
    double J_next = 0.0;
    double max_kl_offline = 0.0;  ///< max_s KL(pi_{k+1/2} || pi_k)(s)

    nlohmann::json to_json() const;
};

inline constexpr double kBoundSlack = 1e-9;

/// Every term of the one-cycle performance-difference bound from exact DP.
/// `adv_estimate` is the advantage table the offline step used; without it
/// eps_adv = 0.
BoundReport theorem1_check(const TabularMdp& mdp, const Matrix& pi_k, const Matrix& pi_half, const Matrix& pi_next,
                           double lambda, const std::optional<Matrix>& adv_estimate = std::nullopt);

struct Envelope {
    double rho = 0.0;
    double floor = 0.0;
    bool rho_constrained = true;  ///< false when Delta_0 ~ 0 leaves rho free
    bool holds = false;           ///< Delta_k <= rho^k Delta_0 + floor for all k
    bool monotone_outside_floor = false;
};

/// Smallest floor b in {0} U {Delta_k} admitting a contraction rho < 1, and
/// the smallest such rho.
Envelope fit_envelope(const Vec& delta);

struct ConvergenceTrace {
    Vec Delta;
    Envelope envelope;
    /// min_k G_off_k / Delta_k over k with Delta_k > 0; NaN if undefined.
    double kappa = std::numeric_limits<double>::quiet_NaN();
};

/// Delta_k = J(pi*) - J(pi_k) with J(pi*) from value iteration.
ConvergenceTrace theorem2_trace(const TabularMdp& mdp, const Vec& J, const Vec& G_off = {});

/// Random instance generators for the sweeps.
TabularMdp random_mdp(std::size_t S, std::size_t A, double gamma, std::size_t horizon, Rng& rng);
Matrix random_policy(std::size_t S, std::size_t A, Rng& rng, double scale = 1.0);

/// (1 - beta) pi + beta greedy(Q^pi): an online step whose TV distance from
/// pi is at most beta and which never lowers any state's expected advantage.
Matrix tv_projected_step(const TabularMdp& mdp, const Matrix& pi, double beta);

struct ExactRun {
    std::vector<Matrix> policies;  ///< pi_0, pi_1, ..., pi_K
    std::vector<BoundReport> bounds;
    Vec J;
};

/// K exact cycles: closed-form offline tilt with exact A^{pi_k}, then a
/// TV-projected online step of size beta.
ExactRun exact_mode_run(const TabularMdp& mdp, const Matrix& pi0, double lambda, double beta, std::size_t K);

/// Results of a real COOPO run on a tabular environment.
struct EmpiricalRun {
    std::vector<BoundReport> bounds;
    Vec J;              ///< exact J(pi_k), k = 0..K
    double delta = 0.0;  ///< max per-state offline KL seen, used as the trust-region radius
    std::size_t pinsker_pairs = 0;
    std::size_t pinsker_violations = 0;
    double pinsker_worst_gap = -std::numeric_limits<double>::infinity();  ///< max TV - sqrt(KL/2)
    std::vector<Concentrability> concentrability;  ///< of pi_k against the dataset, per cycle
};

EmpiricalRun empirical_mode_run(const CoopoConfig& cfg, const Dataset& dataset);

/// Small COOPO setting for tabular theory runs: discount taken from the
/// environment, advantage normalization off, medium-tier data.
CoopoConfig tabular_run_config(const std::string& env, std::uint64_t seed);

struct ClosedFormFit {
    Matrix target;  ///< closed-form tilt of the uniform policy
    Matrix fitted;
    double max_tv = 0.0;
    std::size_t steps = 0;
};

/// Trains a tabular softmax actor from the uniform policy with actor_update
/// (KL weight 0, exact advantages of the uniform policy, one transition per
/// state-action pair) until max-state TV to the closed form drops below `tol`
/// or `max_steps` is reached.
ClosedFormFit fit_closed_form(const Environment& env, double lambda, double tol = 1e-4,
                              std::size_t max_steps = 20000, double lr = 0.05);

/// Pinsker check on one policy pair: returns max_s TV - sqrt(KL(p||q)/2).
double pinsker_gap(const Matrix& p, const Matrix& q);

}  // namespace coopo
