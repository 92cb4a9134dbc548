#pragma once

#include <array>
#include <cstdint>

namespace adaor {

/// SplitMix64 step. Used for seeding and for deriving independent sub-streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mix an arbitrary list of integers into one 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

/// xoshiro256** generator with project-local uniform and normal draws.
///
/// Distributions are implemented here rather than through <random> so that
/// every draw is bit-reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller; the second variate is cached).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace adaor
