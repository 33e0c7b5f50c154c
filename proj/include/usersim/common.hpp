#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace usersim {

// Error taxonomy, mapped to CLI exit codes: config/contract -> 2,
// data/parse -> 3, numeric divergence -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

/// Tensor/layer dimension mismatches.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; message carries the line number.
class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic sub-seed derivation: mixes a base seed with a stream tag
/// and an index, so independent consumers never share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(tag)) ^ index);
}

/// Seeded RNG with portable real-valued draws. The distributions are
/// implemented by hand (bit mapping, Box-Muller) instead of <random>'s
/// distribution templates, whose output differs between standard library
/// implementations; run-to-run and cross-toolchain reproducibility both
/// reduce to mt19937_64, which is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (one value per call, no caching, so the
  /// stream position is a pure function of call count).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) {
    // Modulo bias is < 2^-40 for any n this project uses.
    return static_cast<std::size_t>(next_u64() % n);
  }

 private:
  std::mt19937_64 engine_;
};

/// In-place Fisher-Yates; std::shuffle is implementation-defined.
template <typename Vec>
void deterministic_shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

/// CRC-32 (IEEE 802.3) over a byte buffer; checkpoint payload checksum.
std::uint32_t crc32(const void* bytes, std::size_t count);

/// Standard normal CDF.
inline double normal_cdf(double x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  return 0.5 * std::erfc(-x * inv_sqrt2);
}

}  // namespace usersim
