#pragma once

#include <vector>

#include "coopo/env.hpp"

namespace coopo {

/// Exact finite-horizon evaluation of a stationary policy. Values are for the
/// first step of an episode (h = 0); `V_next` is the value with one step fewer
/// to go, so Q(s,a) = r(s,a) + gamma * sum_s' P(s,a,s') V_next(s') exactly.
struct ExactEval {
    Vec V;
    Matrix Q;
    Matrix A;
    Vec V_next;
    Vec d_pi;  ///< discounted state distribution, renormalized to sum to 1
    double J = 0.0;
};

/// Policy tables are [S][A] probability matrices.
ExactEval exact_eval(const TabularMdp& mdp, const Matrix& pi);

struct OptimalSolution {
    Vec V;                            ///< optimal value at h = 0
    Matrix Q;                         ///< optimal Q at h = 0
    std::vector<std::size_t> greedy;  ///< arg-max of Q, lowest index on ties
    double J = 0.0;                   ///< optimal return over non-stationary policies
};

/// Backward induction over the horizon.
OptimalSolution value_iteration(const TabularMdp& mdp);

/// sum_{h < H} w^h p(s_h = s), normalized to sum to 1. w = gamma gives the
/// discounted state distribution d^pi; w = 1 gives the time-averaged visit
/// distribution that a dataset of full-length rollouts converges to.
Vec state_occupancy(const TabularMdp& mdp, const Matrix& pi, double weight);

Matrix uniform_policy(std::size_t n_states, std::size_t n_actions);
/// epsilon-greedy table around a deterministic action per state.
Matrix greedy_policy(const std::vector<std::size_t>& actions, std::size_t n_actions, double epsilon = 0.0);

}  // namespace coopo
