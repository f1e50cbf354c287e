#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace cohesim {

/// Raw radical inverse of `index` in the given base (van der Corput).
double radical_inverse(std::uint32_t base, std::uint64_t index);

/// Two-dimensional Halton sequence in bases (2, 3) with reverse-radix digit
/// scrambling, a fixed burn-in of 1000 indices, and stride-101 thinning:
/// point(i) evaluates effective index 1000 + 101*i. The scramble permutations
/// are drawn once per sampler by a seeded Fisher-Yates shuffle of {0..b-1}
/// and applied to the finite digit expansion of the index.
class ScrambledHalton2 {
 public:
  explicit ScrambledHalton2(std::uint64_t scramble_seed);

  /// Reconstructs a sampler from explicit permutations, e.g. the ones a
  /// database recorded in its metadata. perm2 must be a permutation of {0,1},
  /// perm3 of {0,1,2}.
  ScrambledHalton2(std::array<std::uint8_t, 2> perm2, std::array<std::uint8_t, 3> perm3);

  std::array<double, 2> point(std::uint64_t i) const;

  std::array<std::uint8_t, 2> perm_base2() const { return perm2_; }
  std::array<std::uint8_t, 3> perm_base3() const { return perm3_; }

  static constexpr std::uint64_t kBurnIn = 1000;
  static constexpr std::uint64_t kStride = 101;

 private:
  std::array<std::uint8_t, 2> perm2_{};
  std::array<std::uint8_t, 3> perm3_{};
};

}  // namespace cohesim
