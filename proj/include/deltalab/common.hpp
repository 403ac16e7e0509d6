#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deltalab {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

/// Flat parameter-space or proxy-space vector.
using Vec = std::vector<double>;

/// Raised for contract violations (bad arguments, malformed files, degenerate inputs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counter-based stream seeding: every worker/group derives its own
/// independent generator state from (seed, stream) without sharing state.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic 64-bit generator plus the two draws the library needs.
/// The draws are defined bit-for-bit here instead of through <random>
/// distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64_mix(state_);
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t state() const { return state_; }

 private:
  static std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

// Small dense-vector helpers shared across modules.
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

/// Numerically stable logistic function.
double sigmoid(double x);

/// Order-sensitive FNV-1a digest of the raw bytes of a double sequence.
std::uint64_t hash_doubles(std::span<const double> values);

}  // namespace deltalab
