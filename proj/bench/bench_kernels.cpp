// Serial reference vs OpenMP kernels. Arg 0 of the omp variants is the thread count.

#include <benchmark/benchmark.h>

#include "coopo/kernels.hpp"
#include "coopo/rng.hpp"
#include "coopo/theory.hpp"

namespace {

using namespace coopo;

struct MlpCase {
    MlpSpec spec{8, 2, 64, 2, Activation::relu};
    ParameterVector params;
    Tape tape;
    Matrix d_out;
    std::vector<double> grad;

    explicit MlpCase(std::size_t rows) {
        params = init_params(spec, 1);
        Rng rng(2);
        Matrix x(rows, spec.input_dim);
        for (double& v : x.data) v = rng.normal();
        tape.inputs.push_back(x);
        d_out = Matrix(rows, spec.output_dim, 1.0 / static_cast<double>(rows));
        grad.assign(params.size(), 0.0);
    }
};

template <bool Omp>
void BM_MlpForward(benchmark::State& state) {
    MlpCase c(static_cast<std::size_t>(state.range(0)));
    kernels::set_threads(Omp ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        Omp ? kernels::omp::mlp_forward(c.spec, c.params, c.tape) : kernels::serial::mlp_forward(c.spec, c.params, c.tape);
        benchmark::DoNotOptimize(c.tape.output.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
    kernels::set_threads(1);
}

template <bool Omp>
void BM_MlpBackward(benchmark::State& state) {
    MlpCase c(static_cast<std::size_t>(state.range(0)));
    kernels::serial::mlp_forward(c.spec, c.params, c.tape);
    kernels::set_threads(Omp ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        std::fill(c.grad.begin(), c.grad.end(), 0.0);
        Omp ? kernels::omp::mlp_backward(c.spec, c.params, c.tape, c.d_out, c.grad)
            : kernels::serial::mlp_backward(c.spec, c.params, c.tape, c.d_out, c.grad);
        benchmark::DoNotOptimize(c.grad.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
    kernels::set_threads(1);
}

template <bool Omp>
void BM_PolicyBackup(benchmark::State& state) {
    const std::size_t S = static_cast<std::size_t>(state.range(0)), A = 4;
    Rng rng(3);
    const TabularMdp m = random_mdp(S, A, 0.9, 1, rng);
    const Matrix pi = random_policy(S, A, rng);
    Vec v_next(S, 1.0), q(S * A), v(S);
    kernels::set_threads(Omp ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        Omp ? kernels::omp::policy_backup(m.view(), pi.data, 0.9, v_next, q, v)
            : kernels::serial::policy_backup(m.view(), pi.data, 0.9, v_next, q, v);
        benchmark::DoNotOptimize(v.data());
    }
    kernels::set_threads(1);
}

BENCHMARK(BM_MlpForward<false>)->Args({4096, 1})->UseRealTime();
BENCHMARK(BM_MlpForward<true>)->Args({4096, 1})->Args({4096, 2})->Args({4096, 4})->UseRealTime();
BENCHMARK(BM_MlpBackward<false>)->Args({4096, 1})->UseRealTime();
BENCHMARK(BM_MlpBackward<true>)->Args({4096, 1})->Args({4096, 2})->Args({4096, 4})->UseRealTime();
BENCHMARK(BM_PolicyBackup<false>)->Args({256, 1})->UseRealTime();
BENCHMARK(BM_PolicyBackup<true>)->Args({256, 1})->Args({256, 2})->Args({256, 4})->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
