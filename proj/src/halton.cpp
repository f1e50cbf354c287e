#include "cohesim/halton.hpp"

#include <algorithm>

#include "cohesim/errors.hpp"
#include "cohesim/rng.hpp"

namespace cohesim {

double radical_inverse(std::uint32_t base, std::uint64_t index) {
  double inv_base = 1.0 / base;
  double scale = inv_base;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % base) * scale;
    index /= base;
    scale *= inv_base;
  }
  return value;
}

namespace {

template <std::size_t B>
double scrambled_inverse(const std::array<std::uint8_t, B>& perm, std::uint64_t index) {
  const double inv_base = 1.0 / static_cast<double>(B);
  double scale = inv_base;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(perm[index % B]) * scale;
    index /= B;
    scale *= inv_base;
  }
  return value;
}

template <std::size_t B>
std::array<std::uint8_t, B> shuffled_digits(Rng& rng) {
  std::array<std::uint8_t, B> p{};
  for (std::size_t i = 0; i < B; ++i) p[i] = static_cast<std::uint8_t>(i);
  for (std::size_t i = B - 1; i > 0; --i)
    std::swap(p[i], p[rng.next_below(i + 1)]);
  return p;
}

template <std::size_t B>
void check_perm(const std::array<std::uint8_t, B>& p) {
  std::array<bool, B> seen{};
  for (auto v : p) {
    if (v >= B || seen[v]) throw DomainError("invalid digit permutation");
    seen[v] = true;
  }
}

}  // namespace

ScrambledHalton2::ScrambledHalton2(std::uint64_t scramble_seed) {
  Rng rng(scramble_seed);
  perm2_ = shuffled_digits<2>(rng);
  perm3_ = shuffled_digits<3>(rng);
}

ScrambledHalton2::ScrambledHalton2(std::array<std::uint8_t, 2> perm2,
                                   std::array<std::uint8_t, 3> perm3)
    : perm2_(perm2), perm3_(perm3) {
  check_perm<2>(perm2_);
  check_perm<3>(perm3_);
}

std::array<double, 2> ScrambledHalton2::point(std::uint64_t i) const {
  const std::uint64_t eff = kBurnIn + kStride * i;
  return {scrambled_inverse<2>(perm2_, eff), scrambled_inverse<3>(perm3_, eff)};
}

}  // namespace cohesim
