#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace diffsg {

/// Mixes (seed, index) into a new 64-bit seed with the SplitMix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Seeded random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distribution transforms are implemented here rather than with
/// <random> distributions, which are implementation-defined: uniforms take the
/// top 53 bits of one draw, normals use the Box-Muller transform (the second
/// value of each pair is cached). Identical seeds give identical sequences on
/// any conforming platform, up to libm rounding in log/sin/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Independent stream keyed by `index`; does not advance this generator.
  Rng derive(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace diffsg
