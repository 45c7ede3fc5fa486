#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coopo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad shapes, unknown names, out-of-range indices.
class InputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values produced during a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input whose content violates a structural invariant.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Operation requested on a kind of data it does not support.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

using Vec = std::vector<double>;

/// Dense row-major matrix; rows are samples in every batched routine.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

bool all_finite(std::span<const double> xs);

/// splitmix64 finalizer; used to derive independent RNG streams.
std::uint64_t mix64(std::uint64_t x);

/// Stream seed for (master seed, tags...). Order of tags matters.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// FNV-1a over the raw bytes of the values; used as a parameter/dataset fingerprint.
std::uint64_t checksum(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

std::string hex64(std::uint64_t v);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace coopo
