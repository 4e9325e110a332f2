#pragma once

#include <cstdint>
#include <vector>

namespace ltmlc {

/// SplitMix64 step: state += 0x9E3779B97F4A7C15, then the standard 64-bit finalizer.
std::uint64_t splitmix64_next(std::uint64_t& state) noexcept;

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(const void* data, std::size_t size) noexcept;

/// Reproducible random source built on SplitMix64.
///
/// uniform() = ((x >> 11) + 0.5) * 2^-53, open interval (0,1).
/// normal() is Box-Muller on two uniforms u1, u2: the pair
/// sqrt(-2 ln u1) * (cos 2pi u2, sin 2pi u2) is returned cos-first, sin on the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  /// Independent stream for (seed, key), e.g. one stream per dataset split or per example.
  static Rng stream(std::uint64_t seed, std::uint64_t key) noexcept;

  std::uint64_t next_u64() noexcept { return splitmix64_next(state_); }
  double uniform() noexcept;
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Unbiased integer in [0, n) by rejection. n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Marsaglia-Tsang. shape > 0.
  double gamma(double shape) noexcept;
  /// g1 / (g1 + g2) with g1 ~ Gamma(a), g2 ~ Gamma(b).
  double beta(double a, double b) noexcept;
  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace ltmlc
