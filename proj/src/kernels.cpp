#include "coopo/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace coopo::kernels {

namespace {

std::atomic<int> g_threads{1};

inline double activate(Activation act, double z) {
    return act == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the post-activation value. relu uses 0 at the kink.
inline double activate_grad(Activation act, double post) {
    return act == Activation::relu ? (post > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

void prepare_tape(const MlpSpec& spec, Tape& tape) {
    const std::size_t n = tape.inputs.at(0).rows;
    tape.inputs.resize(spec.layer_count());
    for (std::size_t l = 1; l < spec.layer_count(); ++l) tape.inputs[l] = Matrix(n, spec.layer_in(l));
    tape.output = Matrix(n, spec.output_dim);
}

// Forward for one row through one layer.
inline void layer_row(const MlpSpec& spec, std::span<const double> params, std::size_t l,
                      const double* x, double* y) {
    const std::size_t in = spec.layer_in(l);
    const std::size_t out = spec.layer_out(l);
    const double* W = params.data() + spec.layer_offset(l);
    const double* b = W + in * out;
    const bool hidden = l + 1 < spec.layer_count();
    for (std::size_t o = 0; o < out; ++o) {
        const double* w = W + o * in;
        double z = b[o];
        for (std::size_t i = 0; i < in; ++i) z += w[i] * x[i];
        y[o] = hidden ? activate(spec.activation, z) : z;
    }
}

// Backward for rows [begin, end), accumulating into grad. `delta`/`prev` are scratch.
void backward_rows(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                   const Matrix& d_output, std::size_t begin, std::size_t end, double* grad) {
    const std::size_t L = spec.layer_count();
    std::size_t widest = spec.output_dim;
    for (std::size_t l = 0; l < L; ++l) widest = std::max(widest, spec.layer_in(l));
    std::vector<double> delta(widest), prev(widest);
    for (std::size_t n = begin; n < end; ++n) {
        std::copy_n(&d_output.data[n * d_output.cols], spec.output_dim, delta.begin());
        for (std::size_t l = L; l-- > 0;) {
            const std::size_t in = spec.layer_in(l);
            const std::size_t out = spec.layer_out(l);
            const std::size_t off = spec.layer_offset(l);
            const double* W = params.data() + off;
            double* gW = grad + off;
            double* gb = gW + in * out;
            const double* x = &tape.inputs[l].data[n * in];
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                double* g = gW + o * in;
                for (std::size_t i = 0; i < in; ++i) g[i] += d * x[i];
                gb[o] += d;
            }
            if (l == 0) break;
            std::fill_n(prev.begin(), in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                const double* w = W + o * in;
                for (std::size_t i = 0; i < in; ++i) prev[i] += w[i] * d;
            }
            for (std::size_t i = 0; i < in; ++i) delta[i] = prev[i] * activate_grad(spec.activation, x[i]);
        }
    }
}

inline void backup_state(const TabularView& m, std::span<const double> pi, double gamma,
                         std::span<const double> v_next, std::span<double> q, std::span<double> v,
                         std::size_t s, bool optimal) {
    const std::size_t S = m.n_states, A = m.n_actions;
    double acc = optimal ? -INFINITY : 0.0;
    for (std::size_t a = 0; a < A; ++a) {
        const double* row = m.P.data() + (s * A + a) * S;
        double ev = 0.0;
        for (std::size_t t = 0; t < S; ++t) ev += row[t] * v_next[t];
        const double qa = m.r[s * A + a] + gamma * ev;
        q[s * A + a] = qa;
        if (optimal)
            acc = std::max(acc, qa);
        else
            acc += pi[s * A + a] * qa;
    }
    v[s] = acc;
}

inline double occupancy_into(const TabularView& m, std::span<const double> pi,
                             std::span<const double> cur, std::size_t t) {
    const std::size_t S = m.n_states, A = m.n_actions;
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        if (cur[s] == 0.0) continue;
        for (std::size_t a = 0; a < A; ++a) acc += cur[s] * pi[s * A + a] * m.P[(s * A + a) * S + t];
    }
    return acc;
}

}  // namespace

void set_threads(int n) {
    n = std::max(1, n);
    g_threads = n;
#if defined(_OPENMP)
    omp_set_num_threads(n);
#endif
}

int threads() { return g_threads.load(); }

namespace serial {

void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape) {
    prepare_tape(spec, tape);
    const std::size_t N = tape.inputs[0].rows;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        Matrix& dst = l + 1 < spec.layer_count() ? tape.inputs[l + 1] : tape.output;
        for (std::size_t n = 0; n < N; ++n)
            layer_row(spec, params, l, &tape.inputs[l].data[n * spec.layer_in(l)], &dst.data[n * dst.cols]);
    }
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad) {
    backward_rows(spec, params, tape, d_output, 0, d_output.rows, grad.data());
}

void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v) {
    for (std::size_t s = 0; s < m.n_states; ++s) backup_state(m, pi, gamma, v_next, q, v, s, false);
}

void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v) {
    for (std::size_t s = 0; s < m.n_states; ++s) backup_state(m, {}, gamma, v_next, q, v, s, true);
}

void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next) {
    for (std::size_t t = 0; t < m.n_states; ++t) next[t] = occupancy_into(m, pi, cur, t);
}

}  // namespace serial

namespace omp {

void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape) {
    prepare_tape(spec, tape);
    const long long N = static_cast<long long>(tape.inputs[0].rows);
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        Matrix& dst = l + 1 < spec.layer_count() ? tape.inputs[l + 1] : tape.output;
        const Matrix& src = tape.inputs[l];
#pragma omp parallel for schedule(static)
        for (long long n = 0; n < N; ++n)
            layer_row(spec, params, l, &src.data[static_cast<std::size_t>(n) * src.cols],
                      &dst.data[static_cast<std::size_t>(n) * dst.cols]);
    }
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad) {
    const std::size_t N = d_output.rows;
    const std::size_t P = spec.parameter_count();
    const std::size_t chunks = (N + kChunkRows - 1) / kChunkRows;
    std::vector<double> partial(chunks * P, 0.0);
    const long long C = static_cast<long long>(chunks);
#pragma omp parallel for schedule(static)
    for (long long c = 0; c < C; ++c) {
        const std::size_t begin = static_cast<std::size_t>(c) * kChunkRows;
        const std::size_t end = std::min(N, begin + kChunkRows);
        backward_rows(spec, params, tape, d_output, begin, end, partial.data() + static_cast<std::size_t>(c) * P);
    }
    for (std::size_t c = 0; c < chunks; ++c) {
        const double* src = partial.data() + c * P;
        for (std::size_t i = 0; i < P; ++i) grad[i] += src[i];
    }
}

void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v) {
    const long long S = static_cast<long long>(m.n_states);
#pragma omp parallel for schedule(static)
    for (long long s = 0; s < S; ++s)
        backup_state(m, pi, gamma, v_next, q, v, static_cast<std::size_t>(s), false);
}

void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v) {
    const long long S = static_cast<long long>(m.n_states);
#pragma omp parallel for schedule(static)
    for (long long s = 0; s < S; ++s)
        backup_state(m, {}, gamma, v_next, q, v, static_cast<std::size_t>(s), true);
}

void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next) {
    const long long S = static_cast<long long>(m.n_states);
#pragma omp parallel for schedule(static)
    for (long long t = 0; t < S; ++t)
        next[static_cast<std::size_t>(t)] = occupancy_into(m, pi, cur, static_cast<std::size_t>(t));
}

}  // namespace omp

void mlp_forward(const MlpSpec& spec, std::span<const double> params, Tape& tape) {
    threads() > 1 ? omp::mlp_forward(spec, params, tape) : serial::mlp_forward(spec, params, tape);
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
                  const Matrix& d_output, std::span<double> grad) {
    threads() > 1 ? omp::mlp_backward(spec, params, tape, d_output, grad)
                  : serial::mlp_backward(spec, params, tape, d_output, grad);
}

void policy_backup(const TabularView& m, std::span<const double> pi, double gamma,
                   std::span<const double> v_next, std::span<double> q, std::span<double> v) {
    threads() > 1 ? omp::policy_backup(m, pi, gamma, v_next, q, v)
                  : serial::policy_backup(m, pi, gamma, v_next, q, v);
}

void optimal_backup(const TabularView& m, double gamma, std::span<const double> v_next,
                    std::span<double> q, std::span<double> v) {
    threads() > 1 ? omp::optimal_backup(m, gamma, v_next, q, v) : serial::optimal_backup(m, gamma, v_next, q, v);
}

void occupancy_step(const TabularView& m, std::span<const double> pi,
                    std::span<const double> cur, std::span<double> next) {
    threads() > 1 ? omp::occupancy_step(m, pi, cur, next) : serial::occupancy_step(m, pi, cur, next);
}

}  // namespace coopo::kernels
