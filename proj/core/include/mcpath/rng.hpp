#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mcpath {

// SplitMix64 (Steele, Lea, Flood 2014). 64-bit state advanced by the golden
// gamma 0x9E3779B97F4A7C15, output mixed with the MurmurHash3-style finalizer
// (0xBF58476D1CE4E5B9, 0x94D049BB133111EB; shifts 30/27/31). Every derived
// quantity below is built from next_u64() with integer/IEEE operations only,
// so streams are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;

  // Independent child stream seeded from this stream's next output.
  Rng split() noexcept { return Rng(mix(next_u64())); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  void shuffle(std::span<int> values) noexcept;

  // k distinct indices from [0, n), returned sorted ascending.
  std::vector<int> sample_without_replacement(int n, int k);

  // Finalizer used for seed derivation.
  static std::uint64_t mix(std::uint64_t z) noexcept;

  // Deterministic child seed for (seed, stream) pairs, e.g. (trial seed, layer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ULL));
  }

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// FNV-1a over the little-endian bytes of each index; used to tag subsets.
std::uint64_t hash_indices(std::span<const int> indices) noexcept;

}  // namespace mcpath
