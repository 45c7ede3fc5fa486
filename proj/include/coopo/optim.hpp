#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "coopo/mlp.hpp"

namespace coopo {

/// Adam with bias correction.
struct OptimizerState {
    Vec first_moment;
    Vec second_moment;
    std::uint64_t step_count = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState for_size(std::size_t n, double lr = 3e-4);
};

/// In-place update. On a non-finite gradient nothing changes and NumericError is thrown.
void adam_update(OptimizerState& state, ParameterVector& params, std::span<const double> gradient);

/// Value-returning form of adam_update.
std::pair<ParameterVector, OptimizerState> optimizer_step(const OptimizerState& state, const ParameterVector& params,
                                                         std::span<const double> gradient);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
    bool pass = false;
};

/// Relative error uses max(|analytic|, |numeric|, kGradCheckFloor) as denominator
/// so coordinates whose true gradient is ~0 are judged on absolute error.
inline constexpr double kGradCheckFloor = 1e-4;

/// Central differences with step h on a seeded random subset of coordinates
/// (at least `min_coords`, or all of them if there are fewer).
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& objective,
                                  std::span<const double> params, std::span<const double> analytic,
                                  double tolerance, std::uint64_t seed = 7, double h = 1e-5,
                                  std::size_t min_coords = 32);

/// Same check for a loss on the outputs of an MLP.
GradCheckReport finite_diff_check(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs,
                                  const BatchLoss& loss, double tolerance, std::uint64_t seed = 7);

}  // namespace coopo
