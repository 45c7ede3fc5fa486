#pragma once

// Data-parallel inner loops. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`. The dispatching
// wrappers at the bottom pick one from the global thread setting: one thread
// always runs the serial reference, so single-threaded runs are bitwise
// reproducible. The OpenMP versions reduce over fixed-size chunks in chunk
// order, so their results do not depend on the thread count either.

#include <cstddef>
#include <exception>
#include <span>
#include <vector>

#include "coopo/mlp.hpp"

namespace coopo::kernels {

/// Rows per reduction chunk in the OpenMP gradient kernel.
inline constexpr std::size_t kChunkRows = 32;

void set_threads(int n);
int threads();

/// Flat tabular shapes: P is [S][A][S'], r and q are [S][A], pi is [S][A].
struct TabularView {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::span<const double> P;
    std::span<const double> r;
};

namespace serial {
void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape);
void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad);
/// One step of finite-horizon policy evaluation: q = r + gamma P v_next, v = sum_a pi q.
void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v);
/// Optimal backup: v = max_a q. Ties break toward the lowest action index.
void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v);
/// Occupancy push: next[s'] = sum_{s,a} cur[s] pi[s][a] P[s][a][s'].
void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next);
}  // namespace serial

namespace omp {
void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape);
void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad);
void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v);
void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v);
void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next);
}  // namespace omp

void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape);
void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad);
void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v);
void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v);
void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next);

/// Runs fn(i) for i in [0, n). Iterations must be independent; callers write
/// into slot i of a pre-sized result vector and aggregate afterwards in index order.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#if defined(_OPENMP)
    if (threads() > 1) {
        std::vector<std::exception_ptr> errors(n);
        const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
        for (long long i = 0; i < count; ++i) {
            try {
                fn(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace coopo::kernels
