#include <cmath>
#include <string>
#include <vector>

#include "cohesim/errors.hpp"
#include "cohesim/micro_model.hpp"
#include "cohesim/rng.hpp"
#include "cohesim/ruc.hpp"
#include "doctest.h"

using namespace cohesim;

namespace {

MaterialParams matrix_material() {
  return load_material(std::string(COHESIM_SOURCE_DIR) + "/materials/polyurethane_matrix.json");
}

MaterialParams particle_material() {
  return load_material(std::string(COHESIM_SOURCE_DIR) + "/materials/nylon_particle.json");
}

RucSpec reference_spec(int n, std::uint64_t seed = 11) {
  RucSpec spec;
  spec.n = n;
  spec.l_ruc_um = 100.0;
  spec.l_c_um = 100.0;
  spec.matrix = matrix_material();
  spec.particle = particle_material();
  spec.particles = {4, 36.4, seed};
  return spec;
}

RucSpec homogeneous_spec(int n) {
  RucSpec spec;
  spec.n = n;
  spec.l_ruc_um = 100.0;
  spec.l_c_um = 100.0;
  spec.matrix = matrix_material();
  return spec;
}

Tensor3 random_elastic_F(Rng& rng) {
  for (;;) {
    Tensor3 F = Tensor3::identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) F(i, j) += rng.uniform(-0.02, 0.02);
    if (F.det() > 0.5) return F;
  }
}

/// Literal per-voxel loop the grouped implementation must match bitwise.
Vec3 taylor_brute(const Tensor3& F0, Ruc& ruc, double dt) {
  const Tensor3 C0 = F0.transpose() * F0;
  const double J = F0.det();
  Tensor3 sum;
  for (int v = 0; v < ruc.voxel_count(); ++v) {
    const MaterialParams& m = ruc.phases[ruc.phase_map[static_cast<std::size_t>(v)]];
    const DamageState before = ruc.damage[static_cast<std::size_t>(v)];
    const double W = dev_energy(unimodular(C0), m.mu);
    const double U = vol_energy(J, m.kappa);
    const double Yd = energy_release(W, U, J, DamageBranch::Deviatoric);
    const double Yv = energy_release(W, U, J, DamageBranch::Volumetric);
    const DamageState after = damage_update(before, Yd, Yv, dt, m);
    ruc.damage[static_cast<std::size_t>(v)] = after;
    sum += F0 * pk2_stress(C0, after, m);
  }
  const Tensor3 avg = sum * (1.0 / ruc.voxel_count());
  return {avg(0, 2), avg(1, 2), avg(2, 2)};
}

}  // namespace

TEST_CASE("interface deformation gradient from the jump") {
  const Tensor3 F_zero = macro_F_from_jump({0, 0, 0}, {0, 0, 1}, 100.0);
  CHECK((F_zero - Tensor3::identity()).max_abs() == 0.0);

  const Tensor3 F_open = macro_F_from_jump({0, 0, 10}, {0, 0, 1}, 100.0);
  CHECK(F_open(2, 2) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(F_open(0, 0) == 1.0);
  CHECK(F_open(0, 2) == 0.0);

  // Rank-1 structure: every column of F - I is parallel to the jump.
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 jump{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(0, 20)};
    Vec3 normal{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (normal.norm() < 0.3) continue;
    normal = normal.normalized();
    Tensor3 F;
    try {
      F = macro_F_from_jump(jump, normal, 100.0);
    } catch (const InadmissibleState&) {
      continue;
    }
    const Tensor3 D = F - Tensor3::identity();
    for (int j = 0; j < 3; ++j) {
      const Vec3 col{D(0, j), D(1, j), D(2, j)};
      CHECK(col.cross(jump).norm() <= 1e-12 * std::max(1.0, jump.norm()));
    }
  }

  CHECK_THROWS_AS(macro_F_from_jump({0, 0, -200}, {0, 0, 1}, 100.0), InadmissibleState);
  CHECK_THROWS_AS(macro_F_from_jump({0, 0, 1}, {0, 0, 2}, 100.0), DomainError);
  CHECK_THROWS_AS(macro_F_from_jump({0, 0, 1}, {0, 0, 1}, 0.0), DomainError);
}

TEST_CASE("particle packing") {
  SUBCASE("no particles gives a homogeneous matrix cell") {
    const Ruc cell = make_ruc(homogeneous_spec(6));
    CHECK(cell.phases.size() == 1);
    CHECK(cell.phase_fraction_pct(0) == 100.0);
    CHECK(cell.mean_damage() == 0.0);
  }

  SUBCASE("reference cell hits the published volume fraction band") {
    const RucSpec spec = reference_spec(10);
    CHECK(spec.particles.requested_fraction_pct(100.0) == doctest::Approx(10.10).epsilon(1e-3));
    const Ruc cell = make_ruc(spec);
    const double achieved = cell.phase_fraction_pct(1);
    CHECK(achieved >= 8.6);
    CHECK(achieved <= 11.6);
    CHECK(cell.particle_centers_um.size() == 4);

    // Spheres overlap nothing and keep clear of the bond faces.
    for (std::size_t a = 0; a < 4; ++a) {
      const Vec3& c = cell.particle_centers_um[a];
      CHECK(c[0] >= 18.2);
      CHECK(c[0] <= 81.8);
      CHECK(c[1] >= 18.2);
      CHECK(c[1] <= 81.8);
      CHECK(c[2] >= 18.2 + 100.0 / 8.0);
      CHECK(c[2] <= 81.8 - 100.0 / 8.0);
      for (std::size_t b = a + 1; b < 4; ++b)
        CHECK((c - cell.particle_centers_um[b]).norm() >= 36.4 - 1e-12);
    }
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        CHECK(cell.phase_map[static_cast<std::size_t>(cell.index(i, j, 0))] == 0);
        CHECK(cell.phase_map[static_cast<std::size_t>(cell.index(i, j, 9))] == 0);
      }
  }

  SUBCASE("same seed reproduces the cell exactly") {
    const Ruc a = make_ruc(reference_spec(10));
    const Ruc b = make_ruc(reference_spec(10));
    CHECK(a.phase_map == b.phase_map);
    CHECK(a.fingerprint() == b.fingerprint());
    const Ruc c = make_ruc(reference_spec(10, 12));
    CHECK(c.fingerprint() != a.fingerprint());
  }

  SUBCASE("impossible packings are rejected") {
    RucSpec dense = reference_spec(10);
    dense.particles.count = 40;  // fraction beyond the packing limit
    CHECK_THROWS_AS(make_ruc(dense), PackingError);
    RucSpec oversized = reference_spec(10);
    oversized.particles = {1, 90.0, 3};  // cannot keep the bond-face margin
    CHECK_THROWS_AS(make_ruc(oversized), PackingError);
  }
}

TEST_CASE("cell JSON round trip") {
  Ruc cell = make_ruc(reference_spec(8));
  cell.damage[100].omega_d = 0.25;
  cell.damage[100].kappa_d = 0.9;
  const auto j = cell.to_json();
  const Ruc back = Ruc::from_json(j);
  CHECK(back.n == cell.n);
  CHECK(back.phase_map == cell.phase_map);
  CHECK(back.damage == cell.damage);
  CHECK(back.fingerprint() == cell.fingerprint());
  CHECK(back.phases[0].name == "polyurethane_matrix");
  CHECK(back.particles.seed == cell.particles.seed);

  // Damage does not enter the fingerprint: a database built for the pristine
  // geometry stays valid as the cell degrades.
  Ruc pristine = make_ruc(reference_spec(8));
  CHECK(pristine.fingerprint() == cell.fingerprint());

  auto tampered = cell.to_json();
  tampered["phase_map_rle"][0][0] = 1 - tampered["phase_map_rle"][0][0].get<int>();
  CHECK_THROWS_AS(Ruc::from_json(tampered), ConfigError);
}

TEST_CASE("taylor model on uniform and mixed cells") {
  const double dt = 1e-3;

  SUBCASE("identity deformation is stress free") {
    Ruc cell = make_ruc(homogeneous_spec(5));
    const MicroResult res = taylor_traction(Tensor3::identity(), cell, dt);
    CHECK(res.traction_mpa.norm() == 0.0);
    CHECK(res.omega_bar == 0.0);
    CHECK(res.converged);
    CHECK(res.iterations == 0);
  }

  SUBCASE("homogeneous cell reproduces the single-point stress") {
    Ruc cell = make_ruc(homogeneous_spec(5));
    Rng rng(9);
    const Tensor3 F0 = random_elastic_F(rng);
    const MicroResult res = taylor_traction(F0, cell, dt);
    const Tensor3 P = F0 * pk2_stress(F0.transpose() * F0, DamageState{}, matrix_material());
    const Vec3 expect{P(0, 2), P(1, 2), P(2, 2)};
    CHECK((res.traction_mpa - expect).norm() <= 1e-12 * std::max(1.0, expect.norm()));
  }

  SUBCASE("two-phase elastic traction is the phase-fraction mixture") {
    Ruc cell = make_ruc(reference_spec(8));
    // A 1% opening keeps both branch energies below the matrix threshold.
    const Tensor3 F0 = macro_F_from_jump({0.5, 0.2, 1.0}, {0, 0, 1}, 100.0);
    const double c_p = cell.phase_fraction_pct(1) / 100.0;
    const Tensor3 C0 = F0.transpose() * F0;
    const Tensor3 Pm = F0 * pk2_stress(C0, DamageState{}, cell.phases[0]);
    const Tensor3 Pp = F0 * pk2_stress(C0, DamageState{}, cell.phases[1]);
    const Tensor3 mix = Pm * (1.0 - c_p) + Pp * c_p;
    const Vec3 expect{mix(0, 2), mix(1, 2), mix(2, 2)};
    const MicroResult res = taylor_traction(F0, cell, dt);
    CHECK(res.omega_bar == 0.0);
    CHECK((res.traction_mpa - expect).norm() <= 1e-10 * expect.norm());
  }

  SUBCASE("grouped evaluation matches the naive voxel loop bitwise") {
    for (const bool damaged : {false, true}) {
      Ruc grouped = make_ruc(reference_spec(8));
      if (damaged) {
        Rng rng(31);
        for (std::size_t v = 0; v < grouped.damage.size(); v += 7) {
          DamageState s;
          s.omega_d = rng.uniform(0.0, 0.6);
          s.omega_v = rng.uniform(0.0, 0.4);
          s.kappa_d = rng.uniform(0.0, 2.0);
          s.kappa_v = rng.uniform(0.0, 2.0);
          grouped.damage[v] = s;
        }
      }
      Ruc brute = grouped;
      const Tensor3 F0 = macro_F_from_jump({2.0, -1.0, 8.0}, {0, 0, 1}, 100.0);
      const MicroResult res = taylor_traction(F0, grouped, dt);
      const Vec3 expect = taylor_brute(F0, brute, dt);
      CHECK(res.traction_mpa[0] == expect[0]);
      CHECK(res.traction_mpa[1] == expect[1]);
      CHECK(res.traction_mpa[2] == expect[2]);
      CHECK(grouped.damage == brute.damage);
    }
  }

  SUBCASE("sustained opening grows damage in the matrix only") {
    Ruc cell = make_ruc(reference_spec(8));
    const Tensor3 F0 = macro_F_from_jump({0, 0, 30.0}, {0, 0, 1}, 100.0);
    const MicroResult first = taylor_traction(F0, cell, 1e-2);
    CHECK(first.omega_bar > 0.0);
    const MicroResult second = taylor_traction(F0, cell, 1e-2);
    CHECK(second.omega_bar > first.omega_bar);
    for (std::size_t v = 0; v < cell.damage.size(); ++v)
      if (cell.phase_map[v] == 1) CHECK(cell.damage[v] == DamageState{});
  }

  SUBCASE("inverted deformation is rejected") {
    Ruc cell = make_ruc(homogeneous_spec(4));
    Tensor3 F0 = Tensor3::identity();
    F0(2, 2) = -0.5;
    CHECK_THROWS_AS(taylor_traction(F0, cell, dt), InadmissibleState);
  }
}

TEST_CASE("full model equals taylor on homogeneous cells") {
  const FemGrid grid(6);
  CHECK(grid.resolution() == 6);
  CHECK(grid.dof_count() == 3 * 6 * 6 * 5);
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor3 F0 = random_elastic_F(rng);
    Ruc fm_cell = make_ruc(homogeneous_spec(6));
    Ruc tm_cell = fm_cell;
    const MicroResult fm = full_model_solve(F0, fm_cell, 1e-3, {}, &grid);
    const MicroResult tm = taylor_traction(F0, tm_cell, 1e-3);
    REQUIRE(fm.converged);
    // The uniform field solves the heterogeneity-free cell exactly, so the
    // initial residual is quadrature roundoff and Newton never iterates.
    CHECK(fm.iterations == 0);
    CHECK((fm.traction_mpa - tm.traction_mpa).norm() <= 1e-8 * tm.traction_mpa.norm());
    CHECK(fm.mean_energy_mpa == doctest::Approx(tm.mean_energy_mpa).epsilon(1e-10));
  }
}

TEST_CASE("two-phase cell: taylor is a stiff upper bound") {
  Ruc fm_cell = make_ruc(reference_spec(8));
  Ruc tm_cell = fm_cell;
  const Tensor3 F0 = macro_F_from_jump({0, 0, 5.0}, {0, 0, 1}, 100.0);
  const MicroResult fm = full_model_solve(F0, fm_cell, 1e-3);
  const MicroResult tm = taylor_traction(F0, tm_cell, 1e-3);
  REQUIRE(fm.converged);
  CHECK(fm.iterations > 0);
  CHECK(fm.traction_mpa.norm() <= tm.traction_mpa.norm() * (1.0 + 1e-10));
  // The zero-fluctuation field is admissible, so the minimizer's energy lies
  // strictly below it on a heterogeneous cell.
  CHECK(fm.mean_energy_mpa < tm.mean_energy_mpa);
  const auto err = traction_model_error(fm.traction_mpa, tm.traction_mpa);
  REQUIRE(err.has_value());
  CHECK(*err > 0.0);
  CHECK(*err < 0.5);
}

TEST_CASE("mesh refinement leaves the traction within 5 percent") {
  const RucSpec coarse_spec = reference_spec(8);
  const RucSpec fine_spec = reference_spec(12);
  Ruc coarse = make_ruc(coarse_spec);
  Ruc fine = make_ruc(fine_spec);
  REQUIRE(coarse.particle_centers_um.size() == fine.particle_centers_um.size());
  for (std::size_t p = 0; p < coarse.particle_centers_um.size(); ++p)
    CHECK((coarse.particle_centers_um[p] - fine.particle_centers_um[p]).norm() == 0.0);

  const Tensor3 F0 = macro_F_from_jump({0, 0, 5.0}, {0, 0, 1}, 100.0);
  const MicroResult rc = full_model_solve(F0, coarse, 1e-3);
  const MicroResult rf = full_model_solve(F0, fine, 1e-3);
  REQUIRE(rc.converged);
  REQUIRE(rf.converged);
  const double rel = (rc.traction_mpa - rf.traction_mpa).norm() / rf.traction_mpa.norm();
  CHECK(rel <= 0.05);
}

TEST_CASE("full model is deterministic and grid caching is transparent") {
  const Tensor3 F0 = macro_F_from_jump({1.0, 0, 4.0}, {0, 0, 1}, 100.0);
  Ruc a = make_ruc(reference_spec(8));
  Ruc b = a;
  Ruc c = a;
  const FemGrid grid(8);
  const MicroResult ra = full_model_solve(F0, a, 1e-3);
  const MicroResult rb = full_model_solve(F0, b, 1e-3);
  const MicroResult rcached = full_model_solve(F0, c, 1e-3, {}, &grid);
  CHECK(ra.traction_mpa[0] == rb.traction_mpa[0]);
  CHECK(ra.traction_mpa[1] == rb.traction_mpa[1]);
  CHECK(ra.traction_mpa[2] == rb.traction_mpa[2]);
  CHECK(ra.iterations == rb.iterations);
  CHECK(a.damage == b.damage);
  CHECK(ra.traction_mpa[2] == rcached.traction_mpa[2]);
  CHECK(a.damage == c.damage);
}

TEST_CASE("zero jump is a fixed point of the whole pipeline") {
  const Tensor3 F0 = macro_F_from_jump({0, 0, 0}, {0, 0, 1}, 100.0);
  Ruc cell = make_ruc(reference_spec(8));
  const Ruc before = cell;
  const MicroResult fm = full_model_solve(F0, cell, 1e-3);
  CHECK(fm.traction_mpa.norm() == 0.0);
  CHECK(fm.iterations == 0);
  CHECK(cell.damage == before.damage);
  const MicroResult tm = taylor_traction(F0, cell, 1e-3);
  CHECK(tm.traction_mpa.norm() == 0.0);
  CHECK(cell.damage == before.damage);
}

TEST_CASE("exhausted substepping reports diagnostics") {
  Ruc cell = make_ruc(reference_spec(8));
  Tensor3 F0 = macro_F_from_jump({40.0, 0, 40.0}, {0, 0, 1}, 100.0);
  MicroSolverOptions opts;
  opts.max_newton = 1;
  opts.max_substep_depth = 0;
  try {
    full_model_solve(F0, cell, 1e-3, opts);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.iterations >= 1);
    CHECK(e.residual > 0.0);
  }
}

TEST_CASE("traction error metric") {
  CHECK(*traction_model_error({2, 0, 0}, {1, 0, 0}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(*traction_model_error({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(!traction_model_error({0, 0, 0}, {1, 0, 0}).has_value());
}
