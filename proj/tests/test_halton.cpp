#include <array>
#include <vector>

#include "cohesim/errors.hpp"
#include "cohesim/halton.hpp"
#include "cohesim/rng.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cohesim;

TEST_CASE("raw radical inverse values") {
  CHECK(radical_inverse(2, 0) == 0.0);
  CHECK(radical_inverse(2, 1) == 0.5);
  CHECK(radical_inverse(2, 2) == 0.25);
  CHECK(radical_inverse(2, 3) == 0.75);
  CHECK(radical_inverse(3, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(radical_inverse(3, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(radical_inverse(3, 3) == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("identity scramble reproduces the raw sequence at skip/stride") {
  const ScrambledHalton2 h({0, 1}, {0, 1, 2});
  for (std::uint64_t i : {0ull, 1ull, 7ull, 42ull}) {
    const auto pt = h.point(i);
    const std::uint64_t eff = 1000 + 101 * i;
    CHECK(pt[0] == radical_inverse(2, eff));
    CHECK(pt[1] == radical_inverse(3, eff));
  }
}

TEST_CASE("scrambled sampler is deterministic per seed and stays in range") {
  const ScrambledHalton2 a(12345), b(12345), c(999);
  bool any_diff = false;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto pa = a.point(i), pb = b.point(i), pc = c.point(i);
    CHECK(pa[0] == pb[0]);
    CHECK(pa[1] == pb[1]);
    CHECK(pa[0] >= 0.0);
    CHECK(pa[0] < 1.0);
    CHECK(pa[1] >= 0.0);
    CHECK(pa[1] < 1.0);
    if (pa[0] != pc[0] || pa[1] != pc[1]) any_diff = true;
  }
  // Different seeds should usually produce different scrambles. Seed 999 was
  // picked to differ from 12345 in at least one permutation.
  CHECK(any_diff);
}

TEST_CASE("permutation round trip and validation") {
  const ScrambledHalton2 a(77);
  const ScrambledHalton2 b(a.perm_base2(), a.perm_base3());
  for (std::uint64_t i = 0; i < 50; ++i) {
    CHECK(a.point(i)[0] == b.point(i)[0]);
    CHECK(a.point(i)[1] == b.point(i)[1]);
  }
  CHECK_THROWS_AS(ScrambledHalton2({0, 0}, {0, 1, 2}), DomainError);
  CHECK_THROWS_AS(ScrambledHalton2({0, 1}, {0, 1, 3}), DomainError);
}

TEST_CASE("scrambled points beat pseudorandom points on star discrepancy") {
  const std::size_t n = 500;
  const ScrambledHalton2 h(2026);
  std::vector<std::array<double, 2>> quasi(n), pseudo(n);
  Rng rng(4711);
  for (std::size_t i = 0; i < n; ++i) {
    quasi[i] = h.point(i);
    pseudo[i] = {rng.next_double(), rng.next_double()};
  }
  const double d_quasi = oracle::star_discrepancy_estimate(quasi);
  const double d_pseudo = oracle::star_discrepancy_estimate(pseudo);
  CHECK(d_quasi < d_pseudo);
}
