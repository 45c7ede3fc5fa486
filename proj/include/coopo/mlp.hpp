#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coopo/common.hpp"

namespace coopo {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Shape of a fully connected network. Hidden layers share one width and one
/// activation; the output layer is linear.
struct MlpSpec {
    std::size_t input_dim = 1;
    std::size_t hidden_layers = 2;
    std::size_t hidden_units = 64;
    std::size_t output_dim = 1;
    Activation activation = Activation::relu;

    std::size_t layer_count() const { return hidden_layers + 1; }
    std::size_t layer_in(std::size_t layer) const;
    std::size_t layer_out(std::size_t layer) const;
    /// Offset of layer `layer`'s weight block; its bias block follows the weights.
    std::size_t layer_offset(std::size_t layer) const;
    std::size_t parameter_count() const;

    /// Throws InputError when a dimension is zero.
    void validate() const;

    bool operator==(const MlpSpec&) const = default;
};

/// Flat parameter storage. Layer-major: for each layer the row-major weight
/// matrix (out x in) followed by the bias vector.
using ParameterVector = std::vector<double>;

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
ParameterVector init_params(const MlpSpec& spec, std::uint64_t seed);

Vec forward(const MlpSpec& spec, std::span<const double> params, std::span<const double> input);
Matrix forward_batch(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs);

/// Activations recorded by a batched forward pass. `inputs[l]` is the input
/// of layer l (so `inputs[0]` is the network input).
struct Tape {
    std::vector<Matrix> inputs;
    Matrix output;
};

Tape forward_tape(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs);

/// Adds dL/dparams to `grad` given dL/doutput for every row of the tape.
void backward(const MlpSpec& spec, std::span<const double> params, const Tape& tape,
              const Matrix& d_output, std::span<double> grad);

/// Loss over a batch of network outputs. Returns the loss and writes
/// dL/doutputs (same shape as outputs, pre-sized by the caller).
using BatchLoss = std::function<double(const Matrix& outputs, Matrix& d_outputs)>;

struct LossGrad {
    double loss = 0.0;
    ParameterVector grad;
};

/// Reverse-mode gradient of `loss(forward_batch(inputs))` with respect to params.
LossGrad grad(const MlpSpec& spec, std::span<const double> params, const Matrix& inputs,
              const BatchLoss& loss);

}  // namespace coopo
