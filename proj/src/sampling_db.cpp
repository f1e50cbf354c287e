#include "cohesim/sampling_db.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>

#include "cohesim/errors.hpp"
#include "cohesim/halton.hpp"
#include "cohesim/log.hpp"

namespace cohesim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kQuarterPi = std::numbers::pi / 4.0;

// Loading increments are kept at or below this fraction of l_c so the damage
// path is resolved consistently across radii.
constexpr double kMaxStepFraction = 0.01;

std::string u64_string(std::uint64_t v) { return std::to_string(v); }

std::uint64_t u64_from_json(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return std::stoull(v.get<std::string>());
  return v.get<std::uint64_t>();
}

}  // namespace

Vec3 spherical_to_jump(double r_um, double phi, double theta) {
  const double s = std::sin(theta);
  return {r_um * std::cos(phi) * s, r_um * std::sin(phi) * s, r_um * std::cos(theta)};
}

Spherical jump_to_spherical(const Vec3& jump_um) {
  Spherical out;
  out.r_um = jump_um.norm();
  if (out.r_um == 0.0) return out;
  out.theta = std::acos(std::clamp(jump_um[2] / out.r_um, -1.0, 1.0));
  out.phi = std::atan2(jump_um[1], jump_um[0]);
  if (out.phi < 0.0) out.phi += kTwoPi;
  if (out.phi >= kTwoPi) out.phi = 0.0;  // atan2 rounding at the wrap point
  return out;
}

double fold_azimuth(double phi) {
  double p = std::fmod(phi, std::numbers::pi / 2.0);
  if (p < 0.0) p += std::numbers::pi / 2.0;
  return std::min(p, std::numbers::pi / 2.0 - p);
}

std::vector<std::array<double, 2>> make_training_samples(int n_t, double phi_range,
                                                         std::uint64_t seed) {
  if (n_t < 1) throw DomainError("need at least one training sample");
  if (phi_range <= 0.0 || phi_range > kTwoPi + 1e-12)
    throw DomainError("azimuth range must lie in (0, 2*pi]");
  const ScrambledHalton2 halton(seed);
  std::vector<std::array<double, 2>> out;
  out.reserve(static_cast<std::size_t>(n_t));
  for (int i = 0; i < n_t; ++i) {
    const auto h = halton.point(static_cast<std::uint64_t>(i));
    out.push_back({phi_range * h[0], std::numbers::pi * h[1]});
  }
  return out;
}

double DbBuildParams::resolved_phi_range() const { return phi_range <= 0.0 ? kTwoPi : phi_range; }

void DbBuildParams::validate() const {
  if (lambda_um <= 0.0) throw ConfigError("database: lambda must be positive");
  if (n_segments < 1) throw ConfigError("database: need at least one segment");
  if (n_training < 1) throw ConfigError("database: need at least one training sample");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("database: gamma must lie in (0, 1)");
  const double pr = resolved_phi_range();
  if (std::abs(pr - kTwoPi) > 1e-12 && std::abs(pr - kQuarterPi) > 1e-12)
    throw ConfigError("database: azimuth range must be the full 2*pi or the reduced pi/4");
  if (svr_c <= 0.0) throw ConfigError("database: SVR penalty must be positive");
  if (svr_epsilon < 0.0) throw ConfigError("database: SVR tube width must be nonnegative");
  if (loading_rate_per_s <= 0.0) throw ConfigError("database: loading rate must be positive");
}

namespace {

DirectionMeasurement measure_one(const Ruc& pristine, int n_segments, double phi, double theta,
                                 int substeps, double step_um, double rate_per_s,
                                 const FemGrid& grid) {
  DirectionMeasurement m;
  m.phi = phi;
  m.theta = theta;
  m.segments.resize(static_cast<std::size_t>(n_segments));
  const Vec3 unit = spherical_to_jump(1.0, phi, theta);
  const Vec3 normal{0.0, 0.0, 1.0};
  const double l_c = pristine.l_c_um;
  const double dt = step_um / (l_c * rate_per_s);

  // One checkpointed sweep covers every segment whose total increment count
  // k*substeps reaches three; its load path passes through each smaller
  // checkpoint radius exactly, so per-radius reruns would repeat the same
  // solves.
  Ruc fm_cell = pristine;
  Ruc tm_cell = pristine;
  bool fm_dead = false;
  for (int step = 1; step <= n_segments * substeps; ++step) {
    const Tensor3 f0 = macro_F_from_jump(unit * (step_um * step), normal, l_c);
    const MicroResult tm = taylor_traction(f0, tm_cell, dt);
    std::optional<MicroResult> fm;
    if (!fm_dead) {
      try {
        fm = full_model_solve(f0, fm_cell, dt, {}, &grid);
      } catch (const NonConvergence& e) {
        fm_dead = true;
        COHESIM_LOG_WARN("full model stalled at r = %.4g um (phi %.4g, theta %.4g): %s",
                         step_um * step, phi, theta, e.what());
      }
    }
    if (step % substeps == 0) {
      const int k = step / substeps;
      if (k * substeps >= 3) {
        auto& sm = m.segments[static_cast<std::size_t>(k - 1)];
        if (fm)
          sm.error = traction_model_error(fm->traction_mpa, tm.traction_mpa);
        else
          sm.fm_failed = true;
      }
    }
  }

  // Short radii get their own three-increment runs; coarser substepping would
  // underresolve the damage path.
  for (int k = 1; k <= n_segments; ++k) {
    if (k * substeps >= 3) continue;
    auto& sm = m.segments[static_cast<std::size_t>(k - 1)];
    const double r_k = step_um * substeps * k;
    const double sub = r_k / 3.0;
    const double sub_dt = sub / (l_c * rate_per_s);
    Ruc fm_short = pristine;
    Ruc tm_short = pristine;
    MicroResult tm{};
    std::optional<MicroResult> fm;
    bool dead = false;
    for (int s = 1; s <= 3; ++s) {
      const Tensor3 f0 = macro_F_from_jump(unit * (sub * s), normal, l_c);
      tm = taylor_traction(f0, tm_short, sub_dt);
      if (dead) continue;
      try {
        fm = full_model_solve(f0, fm_short, sub_dt, {}, &grid);
      } catch (const NonConvergence& e) {
        dead = true;
        fm.reset();
        COHESIM_LOG_WARN("full model stalled at r = %.4g um (phi %.4g, theta %.4g): %s", sub * s,
                         phi, theta, e.what());
      }
    }
    if (fm)
      sm.error = traction_model_error(fm->traction_mpa, tm.traction_mpa);
    else
      sm.fm_failed = true;
  }
  return m;
}

}  // namespace

std::vector<DirectionMeasurement> measure_directions(
    const Ruc& pristine, double lambda_um, int n_segments,
    const std::vector<std::array<double, 2>>& directions, double loading_rate_per_s,
    double max_seconds) {
  if (lambda_um <= 0.0) throw DomainError("lambda must be positive");
  if (n_segments < 1) throw DomainError("need at least one segment");
  if (loading_rate_per_s <= 0.0) throw DomainError("loading rate must be positive");

  const double width = lambda_um / n_segments;
  const int substeps =
      std::max(1, static_cast<int>(std::ceil(width / (kMaxStepFraction * pristine.l_c_um) - 1e-12)));
  const double step_um = width / substeps;

  const FemGrid grid(pristine.n);
  const auto start = std::chrono::steady_clock::now();
  std::vector<DirectionMeasurement> out;
  out.reserve(directions.size());
  for (std::size_t i = 0; i < directions.size(); ++i) {
    if (max_seconds > 0.0) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      if (elapsed.count() > max_seconds)
        throw DeadlineError("database build exceeded its " + std::to_string(max_seconds) +
                            " s budget after " + std::to_string(i) + " of " +
                            std::to_string(directions.size()) + " directions");
    }
    out.push_back(measure_one(pristine, n_segments, directions[i][0], directions[i][1], substeps,
                              step_um, loading_rate_per_s, grid));
  }
  return out;
}

OfflineDatabase OfflineDatabase::assemble(const std::vector<DirectionMeasurement>& measurements,
                                          const DbBuildParams& params, const Ruc& cell) {
  params.validate();
  if (static_cast<int>(measurements.size()) < params.n_training)
    throw DomainError("fewer measured directions than the requested training count");
  for (const auto& m : measurements)
    if (static_cast<int>(m.segments.size()) != params.n_segments)
      throw DomainError("measurement does not cover the database's segment count");

  OfflineDatabase db;
  db.lambda_um_ = params.lambda_um;
  db.params_ = params;
  db.fingerprint_ = cell.fingerprint();

  const double width = params.lambda_um / params.n_segments;
  for (int k = 1; k <= params.n_segments; ++k) {
    DbSegment seg;
    seg.k = k;
    seg.r_lo_um = width * (k - 1);
    seg.r_hi_um = width * k;

    SvrProblem prob;
    prob.C = params.svr_c;
    prob.epsilon_tube = params.svr_epsilon;
    for (int i = 0; i < params.n_training; ++i) {
      const auto& dm = measurements[static_cast<std::size_t>(i)];
      const auto& sm = dm.segments[static_cast<std::size_t>(k - 1)];
      if (sm.fm_failed) ++db.failed_samples_;
      const bool tm = !sm.fm_failed && sm.error.has_value() && *sm.error < params.gamma;
      prob.x.push_back({dm.phi, dm.theta});
      prob.y.push_back(tm ? -1.0 : 1.0);
      ++(tm ? seg.n_tm : seg.n_fm);
    }

    if (seg.n_fm == 0 || seg.n_tm == 0) {
      seg.score = ScoreFunction::constant(seg.n_fm == 0 ? -1.0 : 1.0);
    } else {
      // Bandwidth from the local sample spacing: the TM/FM boundary in the
      // transition segments has structure much finer than the domain span,
      // which a global-scale sigma smooths away.
      prob.sigma = params.svr_sigma > 0.0 ? params.svr_sigma : median_knn_distance(prob.x, 10);
      try {
        seg.score = train_svr(prob);
      } catch (const NonConvergence& e) {
        COHESIM_LOG_WARN("segment %d training hit the sweep limit (residual %.3g); retrying looser",
                         k, e.residual);
        seg.score = train_svr(prob, 1e-4);
      }
    }
    db.segments_.push_back(std::move(seg));
  }
  return db;
}

int OfflineDatabase::segment_of(double r_um) const {
  if (!(r_um > 0.0 && r_um <= lambda_um_))
    throw DomainError("radius outside the database's (0, lambda] span");
  // Boundary radii belong to the lower segment; the epsilon absorbs the
  // rounding of r = k*lambda/N_s computed by callers.
  const double q = r_um * n_segments() / lambda_um_;
  const int k = static_cast<int>(std::ceil(q - 1e-9));
  return std::clamp(k, 1, n_segments());
}

Classification OfflineDatabase::classify(const Vec3& jump_um, std::uint64_t ruc_fingerprint) const {
  if (ruc_fingerprint != fingerprint_)
    throw ConfigError("database was trained on a different cell (fingerprint mismatch)");
  const Spherical s = jump_to_spherical(jump_um);
  if (s.r_um == 0.0) return {MicroModel::TM, false};
  if (s.r_um > lambda_um_) return {MicroModel::FM, true};
  const double phi =
      params_.resolved_phi_range() < kTwoPi - 1e-12 ? fold_azimuth(s.phi) : s.phi;
  const auto& seg = segments_[static_cast<std::size_t>(segment_of(s.r_um) - 1)];
  const double f = seg.score.score({phi, s.theta});
  return {f >= 0.0 ? MicroModel::FM : MicroModel::TM, false};
}

nlohmann::ordered_json OfflineDatabase::to_json() const {
  const ScrambledHalton2 halton(params_.seed);
  nlohmann::ordered_json meta;
  meta["lambda_um"] = lambda_um_;
  meta["n_segments"] = n_segments();
  meta["n_training"] = params_.n_training;
  meta["gamma"] = params_.gamma;
  meta["phi_range"] = params_.resolved_phi_range();
  meta["svr"] = {{"C", params_.svr_c}, {"epsilon", params_.svr_epsilon},
                 {"sigma", params_.svr_sigma}};
  meta["seed"] = u64_string(params_.seed);
  meta["sampling"] = {{"burn_in", ScrambledHalton2::kBurnIn},
                      {"stride", ScrambledHalton2::kStride},
                      {"perm_base2", halton.perm_base2()},
                      {"perm_base3", halton.perm_base3()}};
  meta["loading_rate_per_s"] = params_.loading_rate_per_s;
  meta["ruc_fingerprint"] = u64_string(fingerprint_);
  meta["failed_samples"] = failed_samples_;

  nlohmann::ordered_json segs = nlohmann::ordered_json::array();
  for (const auto& s : segments_) {
    nlohmann::ordered_json j;
    j["k"] = s.k;
    j["r_lo_um"] = s.r_lo_um;
    j["r_hi_um"] = s.r_hi_um;
    j["n_fm"] = s.n_fm;
    j["n_tm"] = s.n_tm;
    j["score_function"] = s.score.to_json();
    segs.push_back(std::move(j));
  }
  return {{"format", "cohesim-db-1"}, {"metadata", std::move(meta)}, {"segments", std::move(segs)}};
}

OfflineDatabase OfflineDatabase::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cohesim-db-1")
      throw ConfigError("unrecognized database format tag");
    const auto& meta = j.at("metadata");
    OfflineDatabase db;
    db.lambda_um_ = meta.at("lambda_um").get<double>();
    db.params_.lambda_um = db.lambda_um_;
    db.params_.n_segments = meta.at("n_segments").get<int>();
    db.params_.n_training = meta.at("n_training").get<int>();
    db.params_.gamma = meta.at("gamma").get<double>();
    db.params_.phi_range = meta.at("phi_range").get<double>();
    db.params_.svr_c = meta.at("svr").at("C").get<double>();
    db.params_.svr_epsilon = meta.at("svr").at("epsilon").get<double>();
    db.params_.svr_sigma = meta.at("svr").at("sigma").get<double>();
    db.params_.seed = u64_from_json(meta, "seed");
    db.params_.loading_rate_per_s = meta.at("loading_rate_per_s").get<double>();
    db.fingerprint_ = u64_from_json(meta, "ruc_fingerprint");
    db.failed_samples_ = meta.at("failed_samples").get<int>();

    const auto& segs = j.at("segments");
    if (static_cast<int>(segs.size()) != db.params_.n_segments)
      throw ConfigError("segment array does not match the declared count");
    for (const auto& sj : segs) {
      DbSegment s;
      s.k = sj.at("k").get<int>();
      s.r_lo_um = sj.at("r_lo_um").get<double>();
      s.r_hi_um = sj.at("r_hi_um").get<double>();
      s.n_fm = sj.at("n_fm").get<int>();
      s.n_tm = sj.at("n_tm").get<int>();
      s.score = ScoreFunction::from_json(sj.at("score_function"));
      if (s.k != static_cast<int>(db.segments_.size()) + 1)
        throw ConfigError("segments must be stored in ascending order");
      db.segments_.push_back(std::move(s));
    }
    return db;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("database file: ") + e.what());
  }
}

void OfflineDatabase::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open database file for writing: " + path);
  out << to_json().dump(2) << '\n';
}

OfflineDatabase OfflineDatabase::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open database file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("database file " + path + ": " + e.what());
  }
  return from_json(j);
}

OfflineDatabase build_database(const Ruc& pristine, const DbBuildParams& params) {
  params.validate();
  const auto directions =
      make_training_samples(params.n_training, params.resolved_phi_range(), params.seed);
  const auto measurements =
      measure_directions(pristine, params.lambda_um, params.n_segments, directions,
                         params.loading_rate_per_s, params.max_build_seconds);
  return OfflineDatabase::assemble(measurements, params, pristine);
}

double classification_error(const ScoreFunction& score,
                            const std::vector<std::array<double, 2>>& x,
                            const std::vector<int>& truth) {
  if (x.empty() || x.size() != truth.size())
    throw DomainError("classification error needs matching, nonempty samples and labels");
  int wrong = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int predicted = score.score(x[i]) >= 0.0 ? 1 : -1;
    if (predicted != truth[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(x.size());
}

void write_audit_csv(const std::vector<DirectionMeasurement>& measurements,
                     const DbBuildParams& params, std::ostream& out) {
  out << "segment,phi,theta,label,error\n";
  const int n = std::min<int>(params.n_training, static_cast<int>(measurements.size()));
  for (int k = 1; k <= params.n_segments; ++k) {
    for (int i = 0; i < n; ++i) {
      const auto& dm = measurements[static_cast<std::size_t>(i)];
      const auto& sm = dm.segments[static_cast<std::size_t>(k - 1)];
      const bool tm = !sm.fm_failed && sm.error.has_value() && *sm.error < params.gamma;
      out << k << ',' << dm.phi << ',' << dm.theta << ',' << (tm ? "TM" : "FM") << ',';
      if (sm.error.has_value())
        out << *sm.error;
      else
        out << "unknown";
      out << '\n';
    }
  }
}

}  // namespace cohesim
