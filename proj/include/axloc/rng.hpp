#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace axloc {

/// SplitMix64 (Steele, Lea & Flood). Chosen over the standard engines because
/// its output sequence, and everything derived from it here, is identical on
/// every platform and standard library.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one value per call, the pair's sine half is dropped).
  double normal();

 private:
  std::uint64_t state_;
};

/// SplitMix64 finalizer applied to `x`.
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Seed for a named component: mix64(seed ^ fnv1a(tag)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

/// Fisher-Yates permutation of [0, n) driven by SplitMix64.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace axloc
