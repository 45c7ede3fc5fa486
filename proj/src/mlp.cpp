#include "coopo/mlp.hpp"

#include <cmath>
#include <random>

#include "coopo/kernels.hpp"

namespace coopo {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw InputError("unknown activation '" + name + "'");
}

std::size_t MlpSpec::layer_in(std::size_t layer) const { return layer == 0 ? input_dim : hidden_units; }

std::size_t MlpSpec::layer_out(std::size_t layer) const {
    return layer + 1 == layer_count() ? output_dim : hidden_units;
}

std::size_t MlpSpec::layer_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += (layer_in(l) + 1) * layer_out(l);
    return off;
}

std::size_t MlpSpec::parameter_count() const { return layer_offset(layer_count()); }

void MlpSpec::validate() const {
    if (input_dim == 0 || output_dim == 0) throw InputError("MlpSpec: input_dim and output_dim must be >= 1");
    if (hidden_layers > 0 && hidden_units == 0) throw InputError("MlpSpec: hidden_units must be >= 1");
}

ParameterVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParameterVector p(spec.parameter_count());
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_in(l)));
        std::uniform_real_distribution<double> u(-bound, bound);
        const std::size_t off = spec.layer_offset(l);
        const std::size_t n = (spec.layer_in(l) + 1) * spec.layer_out(l);
        for (std::size_t i = 0; i < n; ++i) p[off + i] = u(rng);
    }
    return p;
}

namespace {

void check_params(const MlpSpec& spec, std::span<const double> params) {
    if (params.size() < spec.parameter_count())
        throw InputError("parameter vector has " + std::to_string(params.size()) + " entries, spec needs " +
                         std::to_string(spec.parameter_count()));
}

void check_tape(const MlpSpec& spec, const Tape& tape) {
    for (std::size_t l = 1; l < tape.inputs.size(); ++l)
        if (!all_finite(tape.inputs[l].data))
            throw NumericError("non-finite activation at layer " + std::to_string(l - 1));
    if (!all_finite(tape.output.data))
        throw NumericError("non-finite activation at layer " + std::to_string(spec.layer_count() - 1));
}

}  // namespace

Tape forward_tape(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs) {
    check_params(spec, params);
    if (inputs.cols != spec.input_dim)
        throw InputError("input has " + std::to_string(inputs.cols) + " columns, expected " +
                         std::to_string(spec.input_dim));
    Tape tape;
    tape.inputs.push_back(inputs);
    kernels::mlp_forward(spec, params, tape);
    check_tape(spec, tape);
    return tape;
}

Matrix forward_batch(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs) {
    return forward_tape(spec, params, inputs).output;
}

Vec forward(const MlpSpec& spec, std::span<const double> params, std::span<const double> input) {
    if (input.size() != spec.input_dim)
        throw InputError("input has length " + std::to_string(input.size()) + ", expected " +
                         std::to_string(spec.input_dim));
    Matrix x(1, input.size());
    std::copy(input.begin(), input.end(), x.data.begin());
    return forward_batch(spec, params, x).data;
}

void backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape, const Matrix& d_output,
              std::span<double> grad) {
    if (d_output.rows != tape.output.rows || d_output.cols != spec.output_dim)
        throw InputError("d_output shape does not match the tape");
    if (grad.size() < spec.parameter_count()) throw InputError("gradient buffer too small");
    kernels::mlp_backward(spec, params, tape, d_output, grad);
}

LossGrad grad(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs, const BatchLoss& loss) {
    Tape tape = forward_tape(spec, params, inputs);
    Matrix d_out(tape.output.rows, tape.output.cols);
    LossGrad out;
    out.loss = loss(tape.output, d_out);
    if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
    out.grad.assign(spec.parameter_count(), 0.0);
    backward(spec, params, tape, d_out, out.grad);
    return out;
}

}  // namespace coopo
