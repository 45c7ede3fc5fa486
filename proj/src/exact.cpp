#include "coopo/exact.hpp"

#include <algorithm>

#include "coopo/kernels.hpp"

namespace coopo {

namespace {

void check_table(const TabularMdp& mdp, const Matrix& pi) {
    if (pi.rows != mdp.n_states || pi.cols != mdp.n_actions) throw InputError("policy table shape mismatch");
}

}  // namespace

ExactEval exact_eval(const TabularMdp& mdp, const Matrix& pi) {
    check_table(mdp, pi);
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    const auto view = mdp.view();
    ExactEval out;
    Vec v_next(S, 0.0), v(S, 0.0);
    Matrix q(S, A);
    for (std::size_t h = mdp.horizon; h-- > 0;) {
        if (h == 0) out.V_next = v_next;
        kernels::policy_backup(view, pi.data, mdp.gamma, v_next, q.data, v);
        std::swap(v, v_next);
    }
    out.V = v_next;
    out.Q = q;
    out.A = Matrix(S, A);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) out.A(s, a) = q(s, a) - out.V[s];
    out.d_pi = state_occupancy(mdp, pi, mdp.gamma);
    out.J = 0.0;
    for (std::size_t s = 0; s < S; ++s) out.J += mdp.d0[s] * out.V[s];
    return out;
}

OptimalSolution value_iteration(const TabularMdp& mdp) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    const auto view = mdp.view();
    Vec v_next(S, 0.0), v(S, 0.0);
    Matrix q(S, A);
    for (std::size_t h = mdp.horizon; h-- > 0;) {
        kernels::optimal_backup(view, mdp.gamma, v_next, q.data, v);
        std::swap(v, v_next);
    }
    OptimalSolution out;
    out.V = v_next;
    out.Q = q;
    out.greedy.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        auto row = q.row(s);
        out.greedy[s] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out.J += mdp.d0[s] * out.V[s];
    }
    return out;
}

Vec state_occupancy(const TabularMdp& mdp, const Matrix& pi, double weight) {
    check_table(mdp, pi);
    const std::size_t S = mdp.n_states;
    const auto view = mdp.view();
    Vec p = mdp.d0, next(S), acc(S, 0.0);
    double w = 1.0;
    for (std::size_t h = 0; h < mdp.horizon; ++h) {
        for (std::size_t s = 0; s < S; ++s) acc[s] += w * p[s];
        w *= weight;
        if (h + 1 < mdp.horizon) {
            kernels::occupancy_step(view, pi.data, p, next);
            std::swap(p, next);
        }
    }
    double total = 0.0;
    for (double x : acc) total += x;
    for (double& x : acc) x /= total;
    return acc;
}

Matrix uniform_policy(std::size_t n_states, std::size_t n_actions) {
    return Matrix(n_states, n_actions, 1.0 / static_cast<double>(n_actions));
}

Matrix greedy_policy(const std::vector<std::size_t>& actions, std::size_t n_actions, double epsilon) {
    Matrix pi(actions.size(), n_actions, epsilon / static_cast<double>(n_actions));
    for (std::size_t s = 0; s < actions.size(); ++s) pi(s, actions[s]) += 1.0 - epsilon;
    return pi;
}

}  // namespace coopo
