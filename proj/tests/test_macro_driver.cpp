#include <cmath>
#include <sstream>

#include "cohesim/errors.hpp"
#include "cohesim/macro_driver.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cohesim;

namespace {

MaterialParams matrix_material() {
  return load_material(std::string(COHESIM_SOURCE_DIR) + "/materials/polyurethane_matrix.json");
}

MaterialParams particle_material() {
  return load_material(std::string(COHESIM_SOURCE_DIR) + "/materials/nylon_particle.json");
}

Ruc homogeneous_cell(int n) {
  RucSpec spec;
  spec.n = n;
  spec.l_ruc_um = 100.0;
  spec.l_c_um = 100.0;
  spec.matrix = matrix_material();
  return make_ruc(spec);
}

Ruc two_phase_cell(int n) {
  RucSpec spec;
  spec.n = n;
  spec.l_ruc_um = 100.0;
  spec.l_c_um = 100.0;
  spec.matrix = matrix_material();
  spec.particle = particle_material();
  spec.particles = {4, 36.4, 11};
  return make_ruc(spec);
}

InterfaceMesh flat_mesh(int n_elements) {
  const std::array<Vec3, 4> line{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{2, 0, 0}, Vec3{3, 0, 0}};
  return bezier_interface(line, n_elements, 100.0);
}

// Shared two-phase artifacts: one database build feeds several driver cases.
struct TwoPhaseSetup {
  Ruc cell = two_phase_cell(8);
  OfflineDatabase db = [this] {
    DbBuildParams p;
    p.lambda_um = 10.0;
    p.n_segments = 10;
    p.n_training = 12;
    p.gamma = 0.15;
    p.seed = 11;
    return build_database(cell, p);
  }();
};

const TwoPhaseSetup& two_phase() {
  static TwoPhaseSetup s;
  return s;
}

OfflineDatabase homogeneous_db(const Ruc& cell) {
  DbBuildParams p;
  p.lambda_um = 10.0;
  p.n_segments = 5;
  p.n_training = 5;
  p.gamma = 0.5;
  p.seed = 2;
  return build_database(cell, p);
}

std::string strip_seconds_column(const std::string& csv) {
  std::stringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(','));
    out += '\n';
  }
  return out;
}

}  // namespace

TEST_CASE("jump field follows the opening profile") {
  const InterfaceMesh mesh = flat_mesh(8);

  SUBCASE("a zero profile or zero opening gives zero jumps") {
    for (const Vec3& j : jump_field(0.5, mesh, {0.0, 0.0})) CHECK(j.norm() == 0.0);
    for (const Vec3& j : jump_field(0.0, mesh, {0.5, 0.0})) CHECK(j.norm() == 0.0);
  }

  SUBCASE("the opening decays quadratically to the crack root") {
    const double s_crack = 0.5;
    const auto jumps = jump_field(0.01, mesh, {s_crack, 0.0});
    double prev = std::numeric_limits<double>::max();
    for (int e = 0; e < 8; ++e) {
      const double s = (e + 0.5) / 8.0;
      const double g = s < s_crack ? std::pow(1.0 - s / s_crack, 2) : 0.0;
      const auto& j = jumps[static_cast<std::size_t>(e)];
      CHECK(j.norm() == doctest::Approx(10.0 * g).epsilon(1e-12));
      CHECK(j.norm() <= prev);
      prev = j.norm();
      // Pure normal opening on a flat interface.
      CHECK(j[0] == 0.0);
      CHECK(j[1] == 0.0);
      CHECK(j[2] >= 0.0);
    }
    CHECK(jumps.back().norm() == 0.0);  // beyond the root
  }

  SUBCASE("shear mix tilts the opening direction") {
    const auto jumps = jump_field(0.01, mesh, {0.9, 0.5});
    const auto& j = jumps[0];
    REQUIRE(j.norm() > 0.0);
    // Direction (0.5, 0, 1)/sqrt(1.25) in the global frame.
    CHECK(j[0] / j[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(j[1] == 0.0);
  }
}

TEST_CASE("zero load program is a fixed point") {
  const Ruc cell = homogeneous_cell(4);
  const InterfaceMesh mesh = flat_mesh(4);
  LoadProgram program;
  program.delta_max_mm = 0.0;
  program.steps = 3;

  const auto out = run_simulation(mesh, cell, ModelPolicy::forced_tm(), program);
  CHECK(out.halted_at_step == -1);
  REQUIRE(out.steps.size() == 3);
  for (const auto& s : out.steps) {
    CHECK(s.reaction_n == 0.0);
    CHECK(s.tm_fraction == 1.0);
    CHECK(s.n_fm == 0);
    CHECK(s.mean_omega == 0.0);
    CHECK(s.max_jump_um == 0.0);
  }
  for (const auto& e : out.elements) {
    CHECK(e.traction_mpa.norm() == 0.0);
    CHECK(e.omega_bar == 0.0);
  }
  CHECK(out.elements.size() == 3 * 4);
}

TEST_CASE("homogeneous interface: adaptive stays TM and matches forced FM") {
  const Ruc cell = homogeneous_cell(4);
  const OfflineDatabase db = homogeneous_db(cell);
  const InterfaceMesh mesh = flat_mesh(4);
  LoadProgram program;
  program.delta_max_mm = 0.009;  // peak jump 9 um, inside the trained span
  program.steps = 5;
  program.initial_crack_s = 0.9;

  const auto adaptive = run_simulation(mesh, cell, ModelPolicy::adaptive(db), program);
  const auto fm = run_simulation(mesh, cell, ModelPolicy::forced_fm(), program);

  CHECK(adaptive.final_tm_fraction() == 1.0);
  for (const auto& s : adaptive.steps) CHECK(s.n_fm == 0);

  REQUIRE(adaptive.steps.size() == fm.steps.size());
  for (std::size_t i = 0; i < adaptive.steps.size(); ++i) {
    const double ra = adaptive.steps[i].reaction_n;
    const double rf = fm.steps[i].reaction_n;
    CHECK(std::abs(ra - rf) <= 1e-6 * std::max(std::abs(rf), 1e-9));
  }

  // The same cells under the same TM-only policy reproduce the file bytes.
  const auto tm = run_simulation(mesh, cell, ModelPolicy::forced_tm(), program);
  std::stringstream a, b;
  adaptive.write_steps_csv(a);
  tm.write_steps_csv(b);
  CHECK(a.str() == b.str());
}

TEST_CASE("crack root advances as mouth elements fail") {
  const Ruc cell = homogeneous_cell(4);
  const InterfaceMesh mesh = flat_mesh(6);
  LoadProgram program;
  program.delta_max_mm = 0.03;  // 30 um at the mouth: beyond complete failure
  program.steps = 10;
  program.initial_crack_s = 0.5;

  const auto out = run_simulation(mesh, cell, ModelPolicy::forced_tm(), program);
  REQUIRE(out.steps.size() == 10);

  // The root never retreats and eventually moves forward.
  for (std::size_t i = 1; i < out.steps.size(); ++i)
    CHECK(out.steps[i].s_crack >= out.steps[i - 1].s_crack);
  CHECK(out.steps.front().s_crack == 0.5);
  CHECK(out.steps.back().s_crack > 0.5);

  // Advances land on multiples of the element spacing above the initial root.
  for (const auto& s : out.steps) {
    const double shift = (s.s_crack - 0.5) * 6.0;
    CHECK(std::abs(shift - std::round(shift)) <= 1e-12);
  }

  // An element beyond the initial root engages once the root passes it.
  const auto jump_of = [&](int step, int elem) {
    return out.elements[static_cast<std::size_t>((step - 1) * 6 + elem)].jump_um;
  };
  CHECK(jump_of(1, 3) == 0.0);  // s = 0.583 > 0.5 at the start
  CHECK(jump_of(10, 3) > 0.0);
}

TEST_CASE("adaptive two-phase run switches one way and tracks the full model") {
  const auto& setup = two_phase();
  const InterfaceMesh mesh = flat_mesh(6);
  LoadProgram program;
  program.delta_max_mm = 0.018;
  program.steps = 8;
  program.initial_crack_s = 0.75;

  const auto adaptive = run_simulation(mesh, setup.cell, ModelPolicy::adaptive(setup.db), program);
  const auto fm = run_simulation(mesh, setup.cell, ModelPolicy::forced_fm(), program);
  const auto tm = run_simulation(mesh, setup.cell, ModelPolicy::forced_tm(), program);
  REQUIRE(adaptive.halted_at_step == -1);
  REQUIRE(fm.halted_at_step == -1);
  REQUIRE(tm.halted_at_step == -1);

  SUBCASE("TM fraction is nonincreasing and switches are one way") {
    for (std::size_t i = 1; i < adaptive.steps.size(); ++i)
      CHECK(adaptive.steps[i].tm_fraction <= adaptive.steps[i - 1].tm_fraction);
    for (int e = 0; e < 6; ++e) {
      bool seen_fm = false;
      for (int s = 0; s < 8; ++s) {
        const auto& rec = adaptive.elements[static_cast<std::size_t>(s * 6 + e)];
        if (rec.model == MicroModel::FM) seen_fm = true;
        if (seen_fm) CHECK(rec.model == MicroModel::FM);
      }
    }
  }

  SUBCASE("the adaptive answer lies closer to FM than the TM baseline does") {
    const double dev_adaptive = std::abs(adaptive.peak_reaction_n() - fm.peak_reaction_n());
    const double dev_tm = std::abs(tm.peak_reaction_n() - fm.peak_reaction_n());
    CHECK(dev_adaptive <= dev_tm);
    CHECK(fm.peak_reaction_n() > 0.0);
  }

  SUBCASE("traction error fields are nonnegative and vanish for FM against itself") {
    const auto self_err = traction_field_error(fm, fm);
    for (const auto& step : self_err) {
      REQUIRE(step.pct.has_value());
      for (double v : *step.pct) CHECK(v == 0.0);
    }

    const auto tm_err = traction_field_error(tm, fm);
    double max_err = 0.0;
    for (const auto& step : tm_err)
      if (step.pct)
        for (double v : *step.pct) {
          CHECK(v >= 0.0);
          max_err = std::max(max_err, v);
        }
    CHECK(max_err > 0.0);

    const auto ad_err = traction_field_error(adaptive, fm);
    double ad_max = 0.0;
    for (const auto& step : ad_err)
      if (step.pct)
        for (double v : *step.pct) ad_max = std::max(ad_max, v);
    CHECK(ad_max <= max_err * (1.0 + 1e-12));
  }

  SUBCASE("speedup report shape") {
    const auto rows = speedup_report(fm, {{0.15, &adaptive}});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "forced-FM");
    CHECK(rows[0].t_fm_over_t_am == 1.0);
    CHECK(rows[1].gamma == 0.15);
    CHECK(rows[1].final_tm_fraction >= 0.0);
    CHECK(rows[1].final_tm_fraction <= 1.0);
    CHECK(rows[1].t_fm_over_t_am > 0.0);
  }
}

TEST_CASE("per-step records are deterministic across server counts") {
  const Ruc cell = homogeneous_cell(4);
  const OfflineDatabase db = homogeneous_db(cell);
  const InterfaceMesh mesh = flat_mesh(5);
  LoadProgram program;
  program.delta_max_mm = 0.018;  // crosses the trained span: forces FM switches
  program.steps = 6;
  program.initial_crack_s = 0.8;

  DriverNetConfig one;
  one.servers = 1;
  DriverNetConfig four;
  four.servers = 4;
  four.transport_seed = 99;

  const auto a = run_simulation(mesh, cell, ModelPolicy::adaptive(db), program, one);
  const auto b = run_simulation(mesh, cell, ModelPolicy::adaptive(db), program, four);

  // The out-of-range rule must have engaged the full model somewhere.
  CHECK(a.final_tm_fraction() < 1.0);

  std::stringstream sa, sb;
  a.write_steps_csv(sa);
  b.write_steps_csv(sb);
  CHECK(sa.str() == sb.str());

  std::stringstream ea, eb;
  a.write_elements_csv(ea);
  b.write_elements_csv(eb);
  CHECK(strip_seconds_column(ea.str()) == strip_seconds_column(eb.str()));
}

TEST_CASE("configuration errors surface before any work") {
  const Ruc cell = homogeneous_cell(4);
  const OfflineDatabase db = homogeneous_db(cell);
  const InterfaceMesh mesh = flat_mesh(4);
  LoadProgram program;

  SUBCASE("bad programs") {
    LoadProgram p = program;
    p.steps = 0;
    CHECK_THROWS_AS(run_simulation(mesh, cell, ModelPolicy::forced_tm(), p), ConfigError);
    p = program;
    p.delta_max_mm = -1.0;
    CHECK_THROWS_AS(run_simulation(mesh, cell, ModelPolicy::forced_tm(), p), ConfigError);
    p = program;
    p.initial_crack_s = 1.5;
    CHECK_THROWS_AS(run_simulation(mesh, cell, ModelPolicy::forced_tm(), p), ConfigError);
  }

  SUBCASE("adaptive without a matching database") {
    ModelPolicy broken{ModelPolicy::Mode::Adaptive, nullptr};
    CHECK_THROWS_AS(run_simulation(mesh, cell, broken, program), ConfigError);

    const Ruc other = homogeneous_cell(5);
    CHECK_THROWS_AS(run_simulation(mesh, other, ModelPolicy::adaptive(db), program), ConfigError);
  }

  SUBCASE("layer thickness mismatch") {
    const std::array<Vec3, 4> line{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{2, 0, 0}, Vec3{3, 0, 0}};
    const InterfaceMesh thin = bezier_interface(line, 4, 80.0);
    CHECK_THROWS_AS(run_simulation(thin, cell, ModelPolicy::forced_tm(), program), ConfigError);
  }

  SUBCASE("mismatched runs cannot be compared") {
    LoadProgram small;
    small.delta_max_mm = 0.001;
    small.steps = 2;
    const auto r4 = run_simulation(mesh, cell, ModelPolicy::forced_tm(), small);
    const auto r5 = run_simulation(flat_mesh(5), cell, ModelPolicy::forced_tm(), small);
    CHECK_THROWS_AS(traction_field_error(r4, r5), DomainError);
  }
}

TEST_CASE("all-zero reference fields carry no traction error") {
  const Ruc cell = homogeneous_cell(4);
  const InterfaceMesh mesh = flat_mesh(4);
  LoadProgram program;
  program.delta_max_mm = 0.0;
  program.steps = 2;

  const auto fm = run_simulation(mesh, cell, ModelPolicy::forced_fm(), program);
  const auto tm = run_simulation(mesh, cell, ModelPolicy::forced_tm(), program);
  for (const auto& step : traction_field_error(tm, fm)) CHECK(!step.pct.has_value());
}
