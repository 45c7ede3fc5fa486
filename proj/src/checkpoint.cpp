#include "coopo/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace coopo {

namespace {

constexpr std::array<char, 6> kMagic{'C', 'O', 'O', 'P', 'O', '1'};

template <class U>
void put_le(std::ostream& os, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
    unsigned char b[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw SchemaError("checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    ckpt.spec.validate();
    if (ckpt.values.size() != ckpt.spec.parameter_count() + ckpt.extra_count)
        throw InputError("checkpoint value count does not match spec + extras");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.spec.input_dim));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.spec.hidden_layers));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.spec.hidden_units));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.spec.output_dim));
    put_le<std::uint32_t>(os, ckpt.spec.activation == Activation::relu ? 0u : 1u);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.extra_count));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ckpt.values.size()));
    for (double v : ckpt.values) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw InputError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open '" + path.string() + "'");
    std::array<char, 6> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw SchemaError("bad checkpoint magic");
    Checkpoint c;
    c.spec.input_dim = get_le<std::uint32_t>(is);
    c.spec.hidden_layers = get_le<std::uint32_t>(is);
    c.spec.hidden_units = get_le<std::uint32_t>(is);
    c.spec.output_dim = get_le<std::uint32_t>(is);
    const auto act = get_le<std::uint32_t>(is);
    if (act > 1) throw SchemaError("bad activation code in checkpoint");
    c.spec.activation = act == 0 ? Activation::relu : Activation::tanh;
    c.extra_count = get_le<std::uint32_t>(is);
    const auto count = get_le<std::uint64_t>(is);
    c.spec.validate();
    if (count != c.spec.parameter_count() + c.extra_count) throw SchemaError("checkpoint count mismatch");
    c.values.resize(count);
    for (auto& v : c.values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    if (is.peek() != std::char_traits<char>::eof()) throw SchemaError("trailing bytes in checkpoint");
    return c;
}

}  // namespace coopo
