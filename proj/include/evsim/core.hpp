#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evsim {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kKmPerMile = 1.609344;

enum class ErrorKind {
  UnknownNode,
  NoPath,
  EmptyPath,
  InvalidGraph,
  ZeroLengthPath,
  InvalidArgument,
  InvalidConfig,
  TooFewPoints,
  TooFewValues,
  DimensionMismatch,
  NoLegalAction,
  BufferTooSmall,
  NonFiniteLoss,
  ArchitectureMismatch,
  NoActiveTrip,
  IllegalAction,
  InternalInconsistency,
  NonFiniteReward,
  PortOverflow,
  ZeroVariance,
  KeyMismatch,
  InsufficientOverlap,
  RetryLimit,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the library is reported through this exception; `kind()`
/// is stable and is what callers and tests dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

/// SplitMix64 finalizer, used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
  std::uint64_t s = mix64(seed);
  ((s = mix64(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

/// Seeded generator. Distributions are implemented here rather than taken from
/// <random> so that draws are identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal(double mean, double sd);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace evsim
