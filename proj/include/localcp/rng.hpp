#pragma once

#include <cstdint>
#include <string_view>

namespace localcp {

/// Counter-based 64-bit generator (SplitMix64 finalizer over key + counter).
///
/// Every draw is a pure function of (key, counter), so streams are portable
/// across compilers and standard libraries. The standard <random>
/// distributions are not used anywhere because their output is
/// implementation-defined.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : key_(seed) {}

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept;

  /// Unbiased integer on [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller (one variate per call).
  double normal() noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

/// Derives an independent sub-seed, e.g. one per tree or per pipeline stage.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

}  // namespace localcp
