#include <gtest/gtest.h>

#include <cmath>

#include "coopo/checkpoint.hpp"
#include "coopo/kernels.hpp"
#include "coopo/mlp.hpp"
#include "coopo/optim.hpp"
#include "support.hpp"

namespace coopo {
namespace {

MlpSpec spec_of(std::size_t in, std::size_t layers, std::size_t units, std::size_t out,
                Activation act = Activation::tanh) {
    MlpSpec s;
    s.input_dim = in;
    s.hidden_layers = layers;
    s.hidden_units = units;
    s.output_dim = out;
    s.activation = act;
    return s;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& x : m.data) x = rng.uniform(-1.0, 1.0);
    return m;
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
    const MlpSpec s = spec_of(3, 2, 5, 2, Activation::relu);
    const ParameterVector p(s.parameter_count(), 0.0);
    const Vec y = forward(s, p, Vec{0.3, -2.0, 7.0});
    EXPECT_EQ(y, (Vec{0.0, 0.0}));
}

TEST(Mlp, IdentityLinearLayer) {
    const MlpSpec s = spec_of(1, 0, 1, 1);
    const ParameterVector p{1.0, 0.0};
    EXPECT_DOUBLE_EQ(forward(s, p, Vec{2.0})[0], 2.0);
}

TEST(Mlp, OneHiddenReluUnitByHand) {
    const MlpSpec s = spec_of(1, 1, 1, 1, Activation::relu);
    const ParameterVector p{1.0, -1.0, 2.0, 0.0};
    EXPECT_DOUBLE_EQ(forward(s, p, Vec{3.0})[0], 4.0);
}

TEST(Mlp, ParameterCountFormula) {
    Rng rng(11);
    for (int i = 0; i < 10; ++i) {
        const std::size_t in = 1 + rng.uniform_index(6), layers = rng.uniform_index(4),
                          units = 1 + rng.uniform_index(9), out = 1 + rng.uniform_index(4);
        const MlpSpec s = spec_of(in, layers, units, out);
        const std::size_t expected =
            layers == 0 ? (in + 1) * out : (in + 1) * units + (layers - 1) * (units + 1) * units + (units + 1) * out;
        EXPECT_EQ(s.parameter_count(), expected);
        EXPECT_EQ(init_params(s, i).size(), expected);
    }
}

TEST(Mlp, ZeroDimensionRejected) {
    EXPECT_THROW(spec_of(0, 1, 4, 1).validate(), InputError);
    EXPECT_THROW(spec_of(2, 1, 0, 1).validate(), InputError);
}

TEST(Mlp, GradMatchesFiniteDifferencesOnRandomNets) {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const MlpSpec s = spec_of(1 + rng.uniform_index(4), 1 + rng.uniform_index(2), 2 + rng.uniform_index(6),
                                  1 + rng.uniform_index(3));
        const ParameterVector p = init_params(s, 100 + i);
        const Matrix x = random_matrix(7, s.input_dim, rng);
        const Matrix target = random_matrix(7, s.output_dim, rng);
        const BatchLoss loss = [&](const Matrix& out, Matrix& d) {
            double l = 0.0;
            for (std::size_t k = 0; k < out.data.size(); ++k) {
                const double e = out.data[k] - target.data[k];
                l += e * e;
                d.data[k] = 2.0 * e;
            }
            return l;
        };
        const GradCheckReport r = finite_diff_check(s, p, x, loss, 1e-4, i);
        EXPECT_TRUE(r.pass) << "instance " << i << " rel " << r.max_rel_error;
    }
}

TEST(Mlp, ForwardAndGradAreDeterministic) {
    const MlpSpec s = spec_of(3, 2, 8, 2, Activation::relu);
    const ParameterVector p = init_params(s, 9);
    Rng rng(1);
    const Matrix x = random_matrix(40, 3, rng);
    const BatchLoss loss = [](const Matrix& out, Matrix& d) {
        double l = 0.0;
        for (std::size_t k = 0; k < out.data.size(); ++k) {
            l += out.data[k];
            d.data[k] = 1.0;
        }
        return l;
    };
    const LossGrad a = grad(s, p, x, loss), b = grad(s, p, x, loss);
    EXPECT_EQ(a.grad, b.grad);
    EXPECT_EQ(forward_batch(s, p, x).data, forward_batch(s, p, x).data);
}

TEST(Kernels, OpenMpMatchesSerialReference) {
    const MlpSpec s = spec_of(4, 2, 16, 3);
    const ParameterVector p = init_params(s, 3);
    Rng rng(2);
    const Matrix x = random_matrix(150, 4, rng);
    Tape serial_tape, omp_tape;
    serial_tape.inputs = {x};
    omp_tape.inputs = {x};
    kernels::set_threads(4);
    kernels::serial::mlp_forward(s, p, serial_tape);
    kernels::omp::mlp_forward(s, p, omp_tape);
    EXPECT_EQ(serial_tape.output.data, omp_tape.output.data);

    const Matrix d = random_matrix(150, 3, rng);
    ParameterVector g1(p.size(), 0.0), g2(p.size(), 0.0);
    kernels::serial::mlp_backward(s, p, serial_tape, d, g1);
    kernels::omp::mlp_backward(s, p, omp_tape, d, g2);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-12 * (1.0 + std::abs(g1[i])));
    kernels::set_threads(1);
}

TEST(Kernels, OpenMpGradientIndependentOfThreadCount) {
    const MlpSpec s = spec_of(4, 2, 16, 3);
    const ParameterVector p = init_params(s, 3);
    Rng rng(4);
    const Matrix x = random_matrix(200, 4, rng), d = random_matrix(200, 3, rng);
    Tape tape;
    tape.inputs = {x};
    kernels::serial::mlp_forward(s, p, tape);
    ParameterVector g2(p.size(), 0.0), g3(p.size(), 0.0);
    kernels::set_threads(2);
    kernels::omp::mlp_backward(s, p, tape, d, g2);
    kernels::set_threads(3);
    kernels::omp::mlp_backward(s, p, tape, d, g3);
    kernels::set_threads(1);
    EXPECT_EQ(g2, g3);
}

TEST(Adam, ZeroGradientLeavesParams) {
    OptimizerState st = OptimizerState::for_size(3, 1e-3);
    ParameterVector p{1.0, 2.0, 3.0};
    adam_update(st, p, Vec{0.0, 0.0, 0.0});
    EXPECT_EQ(p, (ParameterVector{1.0, 2.0, 3.0}));
    EXPECT_EQ(st.step_count, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    OptimizerState st = OptimizerState::for_size(1, 1e-3);
    ParameterVector p{0.0};
    adam_update(st, p, Vec{0.5});
    // m_hat / sqrt(v_hat) = 0.5 / (0.5 + eps)
    EXPECT_NEAR(p[0], -1e-3 * 0.5 / (0.5 + 1e-8), 1e-15);
}

TEST(Adam, RepeatedStepsMoveMonotonically) {
    OptimizerState st = OptimizerState::for_size(1, 1e-3);
    ParameterVector p{0.0};
    adam_update(st, p, Vec{-2.0});
    const double first = p[0];
    adam_update(st, p, Vec{-2.0});
    EXPECT_GT(first, 0.0);
    EXPECT_GT(p[0], first);
}

TEST(Adam, NonFiniteGradientRejectedWithoutChange) {
    OptimizerState st = OptimizerState::for_size(2);
    ParameterVector p{1.0, 1.0};
    EXPECT_THROW(adam_update(st, p, Vec{NAN, 0.0}), NumericError);
    EXPECT_EQ(p, (ParameterVector{1.0, 1.0}));
    EXPECT_EQ(st.step_count, 0u);
}

TEST(GradCheck, QuadraticIsExact) {
    const ParameterVector theta{3.0};
    const Vec analytic{6.0};
    const auto r = finite_diff_check([](std::span<const double> t) { return t[0] * t[0]; }, theta, analytic, 1e-8);
    EXPECT_TRUE(r.pass);
    EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, ConstantHasZeroGradient) {
    const ParameterVector theta{1.0, -4.0};
    const auto r = finite_diff_check([](std::span<const double>) { return 5.0; }, theta, Vec{0.0, 0.0}, 1e-8);
    EXPECT_TRUE(r.pass);
}

TEST(GradCheck, CorruptedCoordinateFails) {
    const MlpSpec s = spec_of(2, 1, 4, 1, Activation::relu);
    const ParameterVector p = init_params(s, 2);
    Rng rng(8);
    const Matrix x = random_matrix(5, 2, rng);
    const BatchLoss loss = [](const Matrix& out, Matrix& d) {
        double l = 0.0;
        for (std::size_t k = 0; k < out.data.size(); ++k) {
            l += 0.5 * out.data[k] * out.data[k];
            d.data[k] = out.data[k];
        }
        return l;
    };
    LossGrad lg = grad(s, p, x, loss);
    auto objective = [&](std::span<const double> q) {
        Matrix out = forward_batch(s, q, x), d(out.rows, out.cols);
        return loss(out, d);
    };
    EXPECT_TRUE(finite_diff_check(objective, p, lg.grad, 1e-4).pass);
    lg.grad[3] += 1.0;
    const auto bad = finite_diff_check(objective, p, lg.grad, 1e-4, 7, 1e-5, p.size());
    EXPECT_FALSE(bad.pass);
    EXPECT_EQ(bad.worst_index, 3u);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    const auto dir = test::scratch_dir("ckpt");
    const MlpSpec s = spec_of(3, 2, 5, 2);
    Checkpoint c{s, init_params(s, 1), 2};
    c.values.push_back(-0.6931471805599453);
    c.values.push_back(1e-300);
    save_checkpoint(dir / "a.ckpt", c);
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.spec, s);
    EXPECT_EQ(back.extra_count, 2u);
    EXPECT_EQ(back.values, c.values);
}

TEST(Checkpoint, TruncatedFileRejected) {
    const auto dir = test::scratch_dir("ckpt_bad");
    const MlpSpec s = spec_of(2, 1, 3, 1);
    save_checkpoint(dir / "a.ckpt", {s, init_params(s, 1), 0});
    std::filesystem::resize_file(dir / "a.ckpt", 20);
    EXPECT_THROW(load_checkpoint(dir / "a.ckpt"), Error);
}

}  // namespace
}  // namespace coopo
