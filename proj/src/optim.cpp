#include "coopo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace coopo {

OptimizerState OptimizerState::for_size(std::size_t n, double lr) {
    OptimizerState s;
    s.first_moment.assign(n, 0.0);
    s.second_moment.assign(n, 0.0);
    s.lr = lr;
    return s;
}

void adam_update(OptimizerState& state, ParameterVector& params, std::span<const double> gradient) {
    if (gradient.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size())
        throw InputError("optimizer_step: shape mismatch");
    if (!all_finite(gradient)) throw NumericError("optimizer_step: non-finite gradient, step skipped");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = gradient[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.first_moment[i] / c1;
        const double v_hat = state.second_moment[i] / c2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

std::pair<ParameterVector, OptimizerState> optimizer_step(const OptimizerState& state, const ParameterVector& params,
                                                         std::span<const double> gradient) {
    auto next_state = state;
    auto next_params = params;
    adam_update(next_state, next_params, gradient);
    return {std::move(next_params), std::move(next_state)};
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& objective,
                                  std::span<const double> params, std::span<const double> analytic,
                                  double tolerance, std::uint64_t seed, double h, std::size_t min_coords) {
    if (!(tolerance > 0.0)) throw InputError("finite_diff_check: tolerance must be > 0");
    if (analytic.size() != params.size()) throw InputError("finite_diff_check: gradient length mismatch");

    std::vector<std::size_t> coords(params.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > min_coords) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(min_coords);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport rep;
    std::vector<double> x(params.begin(), params.end());
    for (std::size_t i : coords) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = objective(x);
        x[i] = orig - h;
        const double fm = objective(x);
        x[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double abs_err = std::abs(numeric - analytic[i]);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), kGradCheckFloor});
        const double rel = abs_err / denom;
        if (!(rel <= rep.max_rel_error)) {
            rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
            rep.worst_index = i;
        }
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    }
    rep.coords_checked = coords.size();
    rep.pass = rep.max_rel_error <= tolerance;
    return rep;
}

GradCheckReport finite_diff_check(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs,
                                  const BatchLoss& loss, double tolerance, std::uint64_t seed) {
    const LossGrad analytic = grad(spec, params, inputs, loss);
    auto objective = [&](std::span<const double> p) {
        const Matrix out = forward_batch(spec, p, inputs);
        Matrix scratch(out.rows, out.cols);
        return loss(out, scratch);
    };
    return finite_diff_check(objective, params, analytic.grad, tolerance, seed);
}

}  // namespace coopo
