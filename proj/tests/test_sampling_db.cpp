#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cohesim/errors.hpp"
#include "cohesim/rng.hpp"
#include "cohesim/sampling_db.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cohesim;

namespace {

constexpr double kPi = std::numbers::pi;

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

// Shared two-phase ground truth: 6 directions, 5 segments up to 10 um. Built
// once; several cases label or serialize it with different parameters.
struct SharedMeasurements {
  Ruc cell = two_phase_cell(8);
  std::vector<std::array<double, 2>> directions = make_training_samples(6, 2.0 * kPi, 5);
  std::vector<DirectionMeasurement> meas =
      measure_directions(cell, 10.0, 5, directions, 1.0);
};

const SharedMeasurements& shared() {
  static SharedMeasurements s;
  return s;
}

DbBuildParams shared_params(double gamma) {
  DbBuildParams p;
  p.lambda_um = 10.0;
  p.n_segments = 5;
  p.n_training = 6;
  p.gamma = gamma;
  p.seed = 5;
  return p;
}

}  // namespace

TEST_CASE("spherical loading coordinates") {
  SUBCASE("axis-aligned examples") {
    const Vec3 a = spherical_to_jump(2.0, kPi / 2.0, kPi / 2.0);
    CHECK(std::abs(a[0]) <= 1e-15);
    CHECK(a[1] == doctest::Approx(2.0));
    CHECK(std::abs(a[2]) <= 1e-15);

    const Vec3 b = spherical_to_jump(5.0, 0.3, 0.0);  // polar axis
    CHECK(b[0] == 0.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 5.0);

    const Vec3 c = spherical_to_jump(1.0, 0.0, kPi / 2.0);
    CHECK(c[0] == doctest::Approx(1.0));
  }

  SUBCASE("round trip away from the poles") {
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
      const double r = rng.uniform(0.01, 10.0);
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      const double theta = rng.uniform(0.01, kPi - 0.01);
      const Spherical s = jump_to_spherical(spherical_to_jump(r, phi, theta));
      CHECK(s.r_um == doctest::Approx(r).epsilon(1e-12));
      CHECK(std::abs(s.phi - phi) <= 1e-12);
      CHECK(std::abs(s.theta - theta) <= 1e-12);
      CHECK(s.phi >= 0.0);
      CHECK(s.phi < 2.0 * kPi);
    }
  }

  SUBCASE("degenerate points") {
    const Spherical zero = jump_to_spherical({0, 0, 0});
    CHECK(zero.r_um == 0.0);
    CHECK(zero.phi == 0.0);
    CHECK(zero.theta == 0.0);

    const Spherical pole = jump_to_spherical({0, 0, 5});
    CHECK(pole.r_um == 5.0);
    CHECK(pole.theta == 0.0);

    const Spherical south = jump_to_spherical({0, 0, -5});
    CHECK(south.theta == doctest::Approx(kPi));

    // A hair below the +x axis wraps to just under 2*pi instead of going
    // negative.
    const Spherical wrap = jump_to_spherical({1.0, -1e-9, 0.0});
    CHECK(wrap.phi > kPi);
    CHECK(wrap.phi < 2.0 * kPi);
  }
}

TEST_CASE("azimuth folding onto the symmetry wedge") {
  CHECK(fold_azimuth(0.0) == 0.0);
  CHECK(fold_azimuth(kPi / 4.0) == doctest::Approx(kPi / 4.0));
  CHECK(fold_azimuth(kPi / 4.0 + 0.1) == doctest::Approx(kPi / 4.0 - 0.1));
  CHECK(std::abs(fold_azimuth(kPi)) <= 1e-12);
  CHECK(fold_azimuth(3.0 * kPi / 2.0 + 0.2) == doctest::Approx(0.2));
  CHECK(fold_azimuth(2.0 * kPi - 0.1) == doctest::Approx(0.1));

  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    const double phi = rng.uniform(-10.0, 10.0);
    const double f = fold_azimuth(phi);
    CHECK(f >= 0.0);
    CHECK(f <= kPi / 4.0 + 1e-15);
    // Invariant under the square's symmetries: quarter turns and the mirror.
    CHECK(std::abs(fold_azimuth(phi + kPi / 2.0) - f) <= 1e-12);
    CHECK(std::abs(fold_azimuth(kPi / 2.0 - phi) - f) <= 1e-12);
  }
}

TEST_CASE("training sample generation") {
  SUBCASE("ranges and count") {
    const auto full = make_training_samples(500, 2.0 * kPi, 3);
    REQUIRE(full.size() == 500);
    for (const auto& s : full) {
      CHECK(s[0] >= 0.0);
      CHECK(s[0] < 2.0 * kPi);
      CHECK(s[1] >= 0.0);
      CHECK(s[1] <= kPi);
    }
    const auto reduced = make_training_samples(200, kPi / 4.0, 3);
    for (const auto& s : reduced) CHECK(s[0] < kPi / 4.0);
  }

  SUBCASE("shorter lists are prefixes of longer ones") {
    const auto small = make_training_samples(50, 2.0 * kPi, 9);
    const auto large = make_training_samples(300, 2.0 * kPi, 9);
    for (std::size_t i = 0; i < small.size(); ++i) {
      CHECK(small[i][0] == large[i][0]);
      CHECK(small[i][1] == large[i][1]);
    }
  }

  SUBCASE("seed determinism") {
    CHECK(make_training_samples(40, 2.0 * kPi, 1) == make_training_samples(40, 2.0 * kPi, 1));
    CHECK(make_training_samples(40, 2.0 * kPi, 1) != make_training_samples(40, 2.0 * kPi, 2));
  }

  SUBCASE("contract violations") {
    CHECK_THROWS_AS(make_training_samples(0, 2.0 * kPi, 1), DomainError);
    CHECK_THROWS_AS(make_training_samples(10, 0.0, 1), DomainError);
    CHECK_THROWS_AS(make_training_samples(10, 7.0, 1), DomainError);
  }
}

TEST_CASE("checkpointed sweeps equal independent per-segment loading") {
  // Oracle: load each segment radius from the pristine state on its own,
  // stepping through the same radius grid. The production sweep shares the
  // path prefix across segments; both must produce bit-identical errors.
  const auto& sh = shared();
  const FemGrid grid(sh.cell.n);
  const double width = 10.0 / 5;        // 2 um segments
  const int substeps = 2;               // capped at 1 um increments
  const double step_um = width / substeps;
  const double l_c = sh.cell.l_c_um;
  const Vec3 normal{0, 0, 1};

  for (int d = 0; d < 2; ++d) {
    const double phi = sh.directions[static_cast<std::size_t>(d)][0];
    const double theta = sh.directions[static_cast<std::size_t>(d)][1];
    const Vec3 unit = spherical_to_jump(1.0, phi, theta);
    for (int k = 1; k <= 5; ++k) {
      Ruc fm_cell = sh.cell;
      Ruc tm_cell = sh.cell;
      MicroResult tm{};
      MicroResult fm{};
      if (k * substeps >= 3) {
        const double dt = step_um / (l_c * 1.0);
        for (int j = 1; j <= k * substeps; ++j) {
          const Tensor3 f0 = macro_F_from_jump(unit * (step_um * j), normal, l_c);
          tm = taylor_traction(f0, tm_cell, dt);
          fm = full_model_solve(f0, fm_cell, dt, {}, &grid);
        }
      } else {
        const double r_k = step_um * substeps * k;
        const double sub = r_k / 3.0;
        const double dt = sub / (l_c * 1.0);
        for (int j = 1; j <= 3; ++j) {
          const Tensor3 f0 = macro_F_from_jump(unit * (sub * j), normal, l_c);
          tm = taylor_traction(f0, tm_cell, dt);
          fm = full_model_solve(f0, fm_cell, dt, {}, &grid);
        }
      }
      const auto expected = traction_model_error(fm.traction_mpa, tm.traction_mpa);
      const auto& sm = sh.meas[static_cast<std::size_t>(d)].segments[static_cast<std::size_t>(k - 1)];
      REQUIRE(!sm.fm_failed);
      REQUIRE(sm.error.has_value());
      REQUIRE(expected.has_value());
      CHECK(*sm.error == *expected);
    }
  }
}

TEST_CASE("labeling against the model tolerance") {
  SUBCASE("two-phase errors are strictly positive, so a tiny gamma labels everything FM") {
    const auto db = OfflineDatabase::assemble(shared().meas, shared_params(1e-9), shared().cell);
    for (const auto& seg : db.segments()) {
      CHECK(seg.n_tm == 0);
      CHECK(seg.n_fm == 6);
      CHECK(seg.score.support_vectors().empty());  // constant FM classifier
    }
    CHECK(db.failed_samples() == 0);
  }

  SUBCASE("raising gamma never flips a sample from TM to FM") {
    const auto loose = OfflineDatabase::assemble(shared().meas, shared_params(0.40), shared().cell);
    const auto mid = OfflineDatabase::assemble(shared().meas, shared_params(0.15), shared().cell);
    const auto tight = OfflineDatabase::assemble(shared().meas, shared_params(0.05), shared().cell);
    for (int k = 0; k < 5; ++k) {
      const auto idx = static_cast<std::size_t>(k);
      CHECK(loose.segments()[idx].n_tm >= mid.segments()[idx].n_tm);
      CHECK(mid.segments()[idx].n_tm >= tight.segments()[idx].n_tm);
    }
  }

  SUBCASE("homogeneous cells have zero error everywhere: all TM") {
    const Ruc cell = homogeneous_cell(4);
    DbBuildParams p;
    p.lambda_um = 6.0;
    p.n_segments = 3;
    p.n_training = 5;
    p.gamma = 0.999;
    p.seed = 2;
    const auto db = build_database(cell, p);
    for (const auto& seg : db.segments()) {
      CHECK(seg.n_tm == 5);
      CHECK(seg.n_fm == 0);
      CHECK(seg.score.support_vectors().empty());
      CHECK(seg.score.bias() < 0.0);  // constant TM
    }
  }
}

TEST_CASE("segment partition of the radius span") {
  const Ruc cell = homogeneous_cell(4);
  DbBuildParams p;
  p.lambda_um = 10.0;
  p.n_segments = 10;
  p.n_training = 3;
  p.gamma = 0.5;
  const auto db = build_database(cell, p);

  CHECK(db.segment_of(0.5) == 1);
  CHECK(db.segment_of(1.0) == 1);  // boundary belongs to the lower segment
  CHECK(db.segment_of(1.0 + 1e-6) == 2);
  CHECK(db.segment_of(10.0) == 10);
  CHECK_THROWS_AS(db.segment_of(0.0), DomainError);
  CHECK_THROWS_AS(db.segment_of(-1.0), DomainError);
  CHECK_THROWS_AS(db.segment_of(10.0001), DomainError);

  for (int k = 1; k <= 10; ++k) CHECK(db.segment_of(k * 10.0 / 10) == k);

  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const double r = rng.uniform(1e-6, 10.0);
    const int k = db.segment_of(r);
    const auto& seg = db.segments()[static_cast<std::size_t>(k - 1)];
    CHECK(r > seg.r_lo_um - 1e-9);
    CHECK(r <= seg.r_hi_um + 1e-9);
  }
}

TEST_CASE("classification contract") {
  const Ruc cell = homogeneous_cell(4);
  DbBuildParams p;
  p.lambda_um = 5.0;
  p.n_segments = 5;
  p.n_training = 4;
  p.gamma = 0.9;
  const auto db = build_database(cell, p);
  const std::uint64_t fp = cell.fingerprint();

  SUBCASE("zero jump starts as the cheap model") {
    const auto c = db.classify({0, 0, 0}, fp);
    CHECK(c.model == MicroModel::TM);
    CHECK(!c.out_of_range);
  }

  SUBCASE("beyond the trained span the full model is forced") {
    const auto c = db.classify({0, 0, 5.1}, fp);
    CHECK(c.model == MicroModel::FM);
    CHECK(c.out_of_range);
  }

  SUBCASE("an all-TM database answers TM on every in-range query") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      const Vec3 j = spherical_to_jump(rng.uniform(0.01, 5.0), rng.uniform(0.0, 2.0 * kPi),
                                       rng.uniform(0.0, kPi));
      const auto c = db.classify(j, fp);
      CHECK(c.model == MicroModel::TM);
      CHECK(!c.out_of_range);
    }
  }

  SUBCASE("a database refuses cells it was not trained on") {
    CHECK_THROWS_AS(db.classify({0, 0, 1}, fp + 1), ConfigError);
  }
}

TEST_CASE("database files are deterministic and round trip") {
  const Ruc cell = homogeneous_cell(4);
  DbBuildParams p;
  p.lambda_um = 6.0;
  p.n_segments = 3;
  p.n_training = 5;
  p.gamma = 0.5;
  p.seed = 42;

  const auto db1 = build_database(cell, p);
  const auto db2 = build_database(cell, p);
  const std::string text1 = db1.to_json().dump(2);
  CHECK(text1 == db2.to_json().dump(2));

  const std::string path = "/tmp/cohesim_db_roundtrip.json";
  db1.save(path);
  const auto loaded = OfflineDatabase::load(path);
  CHECK(loaded.to_json().dump(2) == text1);
  CHECK(loaded.fingerprint() == cell.fingerprint());
  CHECK(loaded.lambda_um() == db1.lambda_um());
  CHECK(loaded.n_segments() == 3);
  CHECK(loaded.params().gamma == 0.5);
  CHECK(loaded.params().seed == 42);

  auto j = db1.to_json();
  j["format"] = "cohesim-db-9";
  CHECK_THROWS_AS(OfflineDatabase::from_json(j), ConfigError);
  CHECK_THROWS_AS(OfflineDatabase::load("/tmp/does_not_exist_cohesim.json"), ConfigError);
}

TEST_CASE("classification error counting") {
  const auto always_fm = ScoreFunction::constant(1.0);
  const std::vector<std::array<double, 2>> x{{0.1, 0.2}, {1.0, 2.0}, {3.0, 1.0}, {2.0, 2.0}};
  CHECK(classification_error(always_fm, x, {1, 1, 1, 1}) == 0.0);
  CHECK(classification_error(always_fm, x, {-1, -1, -1, -1}) == 1.0);
  CHECK(classification_error(always_fm, x, {1, -1, 1, -1}) == 0.5);
  CHECK_THROWS_AS(classification_error(always_fm, {}, {}), DomainError);
  CHECK_THROWS_AS(classification_error(always_fm, x, {1, 1}), DomainError);
}

TEST_CASE("audit record matches the trained labels") {
  const auto params = shared_params(0.15);
  const auto db = OfflineDatabase::assemble(shared().meas, params, shared().cell);

  std::stringstream ss;
  write_audit_csv(shared().meas, params, ss);

  std::string line;
  REQUIRE(std::getline(ss, line));
  CHECK(line == "segment,phi,theta,label,error");
  std::vector<int> tm_per_segment(5, 0);
  int rows = 0;
  while (std::getline(ss, line)) {
    ++rows;
    std::stringstream row(line);
    std::string seg, phi, theta, label, error;
    std::getline(row, seg, ',');
    std::getline(row, phi, ',');
    std::getline(row, theta, ',');
    std::getline(row, label, ',');
    std::getline(row, error, ',');
    CHECK((label == "TM" || label == "FM"));
    CHECK(error != "unknown");  // every sample here measured successfully
    if (label == "TM") ++tm_per_segment[static_cast<std::size_t>(std::stoi(seg) - 1)];
  }
  CHECK(rows == 5 * 6);
  for (int k = 0; k < 5; ++k)
    CHECK(tm_per_segment[static_cast<std::size_t>(k)] ==
          db.segments()[static_cast<std::size_t>(k)].n_tm);
}

TEST_CASE("build budget aborts between directions") {
  const Ruc cell = homogeneous_cell(4);
  const auto dirs = make_training_samples(50, 2.0 * kPi, 1);
  CHECK_THROWS_AS(measure_directions(cell, 5.0, 5, dirs, 1.0, 1e-9), DeadlineError);
}

TEST_CASE("assembly input validation") {
  const auto& sh = shared();
  auto p = shared_params(0.15);

  p.n_training = 7;  // only 6 directions measured
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), DomainError);

  p = shared_params(0.15);
  p.n_segments = 4;  // measurements cover 5
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), DomainError);

  p = shared_params(0.0);
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), ConfigError);
  p = shared_params(1.0);
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), ConfigError);

  p = shared_params(0.15);
  p.lambda_um = -1.0;
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), ConfigError);

  p = shared_params(0.15);
  p.phi_range = 1.0;  // neither full nor reduced
  CHECK_THROWS_AS(OfflineDatabase::assemble(sh.meas, p, sh.cell), ConfigError);
}

TEST_CASE("the cheap-model region shrinks as the jump grows") {
  const Ruc cell = two_phase_cell(8);
  DbBuildParams p;
  p.lambda_um = 10.0;  // complete failure at 10% of l_c
  p.n_segments = 10;
  p.n_training = 24;
  p.gamma = 0.15;
  p.seed = 11;
  const auto db = build_database(cell, p);

  CHECK(db.failed_samples() == 0);
  std::vector<int> tm_counts;
  std::string shape;
  for (const auto& seg : db.segments()) {
    REQUIRE(seg.n_fm + seg.n_tm == 24);
    tm_counts.push_back(seg.n_tm);
    shape += std::to_string(seg.n_tm) + " ";
  }
  CAPTURE(shape);
  for (std::size_t k = 1; k < tm_counts.size(); ++k)
    CHECK(tm_counts[k] <= tm_counts[k - 1]);
}
