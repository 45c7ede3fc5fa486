#pragma once

#include <filesystem>

#include "coopo/mlp.hpp"

namespace coopo {

/// Binary parameter checkpoint.
///
/// Layout (all integers little-endian):
///   bytes 0..5   magic "COOPO1"
///   6 x uint32   input_dim, hidden_layers, hidden_units, output_dim,
///                activation (0 relu, 1 tanh), extra_count
///   uint64       total value count (= parameter_count + extra_count)
///   float64[]    network parameters in layout order, then the extras
///
/// Extras carry per-dimension values that live outside the network, such as
/// a Gaussian policy's log standard deviations.
struct Checkpoint {
    MlpSpec spec;
    ParameterVector values;
    std::size_t extra_count = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coopo
