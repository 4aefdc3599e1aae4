#pragma once

#include <cstdint>

namespace unroll {

/// xoshiro256** seeded through splitmix64. Normals come from Box–Muller with
/// the second variate of each pair cached. The algorithm is fixed so the
/// same seed yields the same stream in any language binding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). Uses a plain modulo reduction.
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Independent stream derived from this seed and a label (e.g. a file index).
  static Rng derive(std::uint64_t seed, std::uint64_t label);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace unroll
