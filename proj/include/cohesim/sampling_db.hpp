#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cohesim/micro_model.hpp"
#include "cohesim/model.hpp"
#include "cohesim/ruc.hpp"
#include "cohesim/svr.hpp"
#include "cohesim/tensor.hpp"
#include "json.hpp"

namespace cohesim {

/// Jump components from spherical loading coordinates:
/// (r cos(phi) sin(theta), r sin(phi) sin(theta), r cos(theta)).
Vec3 spherical_to_jump(double r_um, double phi, double theta);

struct Spherical {
  double r_um = 0.0;
  double phi = 0.0;    // azimuth, wrapped to [0, 2*pi)
  double theta = 0.0;  // polar, in [0, pi]
};

/// Inverse of spherical_to_jump. The zero jump maps to (0, 0, 0).
Spherical jump_to_spherical(const Vec3& jump_um);

/// Folds an azimuth into [0, pi/4] using the dihedral symmetry of a square
/// cross section: quarter-turn rotations plus the diagonal mirror. Used by
/// databases trained on the reduced range.
double fold_azimuth(double phi);

/// One labeled loading direction at a fixed radius.
struct LoadSample {
  double phi = 0.0;
  double theta = 0.0;
  double r_um = 0.0;
  int label = 0;                // +1 full model, -1 Taylor model
  std::optional<double> error;  // ||t_fm - t_tm|| / ||t_fm||; empty when unknown
};

/// N_t quasi-random (phi, theta) pairs: phi = phi_range * H1, theta = pi * H2
/// from the scrambled Halton stream for `seed`. Point i is independent of N_t,
/// so a shorter sample list is a prefix of a longer one.
std::vector<std::array<double, 2>> make_training_samples(int n_t, double phi_range,
                                                         std::uint64_t seed);

struct DbBuildParams {
  double lambda_um = 10.0;  // largest classifiable jump magnitude
  int n_segments = 10;
  int n_training = 100;
  double gamma = 0.15;              // model tolerance on the traction error
  double phi_range = 0.0;           // 0 selects the full 2*pi azimuth range
  double svr_c = 10.0;
  double svr_epsilon = 0.1;
  double svr_sigma = 0.0;           // <= 0: median 10-NN distance per segment
  std::uint64_t seed = 0;           // scramble seed, recorded in metadata
  double loading_rate_per_s = 1.0;  // cap on ||d(jump)/dt|| / l_c
  double max_build_seconds = 0.0;   // 0 = unlimited

  double resolved_phi_range() const;
  void validate() const;
};

/// Measured model error for one (direction, segment) pair. `fm_failed` marks
/// radii the full model could not reach; such samples are labeled FM.
struct SegmentMeasurement {
  std::optional<double> error;
  bool fm_failed = false;
};

struct DirectionMeasurement {
  double phi = 0.0;
  double theta = 0.0;
  std::vector<SegmentMeasurement> segments;  // index k-1 holds radius k*lambda/N_s
};

/// Ground truth for every direction: paired FM and TM loading from the
/// pristine cell to each segment radius r_k = k*lambda/N_s along the fixed
/// direction, in proportional increments no coarser than 0.01*l_c. Radii
/// needing at least three increments share one checkpointed sweep per model
/// (the sweep passes through every smaller segment radius exactly); shorter
/// radii rerun separately with three increments. Increment duration comes
/// from the loading rate cap held as an equality.
///
/// Full-model non-convergence marks that segment and all larger ones failed
/// for the direction and is logged; it never aborts the pass. A positive
/// `max_seconds` budget aborts with DeadlineError between directions.
std::vector<DirectionMeasurement> measure_directions(
    const Ruc& pristine, double lambda_um, int n_segments,
    const std::vector<std::array<double, 2>>& directions, double loading_rate_per_s,
    double max_seconds = 0.0);

struct DbSegment {
  int k = 0;  // 1-based; covers r in ((k-1)*lambda/N_s, k*lambda/N_s]
  double r_lo_um = 0.0;
  double r_hi_um = 0.0;
  ScoreFunction score;
  int n_fm = 0;  // training label counts
  int n_tm = 0;
};

struct Classification {
  MicroModel model = MicroModel::TM;
  bool out_of_range = false;  // jump exceeded lambda; FM returned conservatively
};

class OfflineDatabase {
 public:
  /// Labels the measurements against `params.gamma` (TM iff error < gamma,
  /// FM otherwise or when the error is unknown or the solve failed) and
  /// trains one score function per segment. Single-class segments store a
  /// constant classifier. Only the first `params.n_training` directions are
  /// consumed, so one measurement pass serves nested training counts.
  static OfflineDatabase assemble(const std::vector<DirectionMeasurement>& measurements,
                                  const DbBuildParams& params, const Ruc& cell);

  /// Segment lookup by r: smallest k with r <= k*lambda/N_s. r must lie in
  /// (0, lambda]; boundaries belong to the lower segment.
  int segment_of(double r_um) const;

  /// FM when the segment score is >= 0 at (phi, theta), TM otherwise.
  /// The zero jump is TM; r > lambda returns FM with the out-of-range flag.
  /// Reduced-range databases fold the azimuth before scoring.
  /// Throws ConfigError when the fingerprint differs from the training cell.
  Classification classify(const Vec3& jump_um, std::uint64_t ruc_fingerprint) const;

  double lambda_um() const { return lambda_um_; }
  int n_segments() const { return static_cast<int>(segments_.size()); }
  const std::vector<DbSegment>& segments() const { return segments_; }
  const DbBuildParams& params() const { return params_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  int failed_samples() const { return failed_samples_; }

  nlohmann::ordered_json to_json() const;
  static OfflineDatabase from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static OfflineDatabase load(const std::string& path);

 private:
  double lambda_um_ = 0.0;
  DbBuildParams params_;
  std::uint64_t fingerprint_ = 0;
  int failed_samples_ = 0;
  std::vector<DbSegment> segments_;
};

/// Measurement plus assembly in one call.
OfflineDatabase build_database(const Ruc& pristine, const DbBuildParams& params);

/// Fraction of sign mismatches between score(x) and the ground-truth labels.
double classification_error(const ScoreFunction& score,
                            const std::vector<std::array<double, 2>>& x,
                            const std::vector<int>& truth);

/// Audit record of every (direction, segment) sample that went into a build:
/// CSV with segment, phi, theta, label, error columns.
void write_audit_csv(const std::vector<DirectionMeasurement>& measurements,
                     const DbBuildParams& params, std::ostream& out);

}  // namespace cohesim
