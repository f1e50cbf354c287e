#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "json.hpp"

namespace cohesim {

/// Gaussian kernel exp(-||xi - xj||^2 / sigma^2).
double gaussian_kernel(const std::array<double, 2>& xi, const std::array<double, 2>& xj,
                       double sigma);

/// Median of all pairwise distances; a global scale for generic problems.
/// Falls back to 1 for degenerate sets.
double median_pairwise_distance(const std::vector<std::array<double, 2>>& pts);

/// Median over points of the distance to the k-th nearest neighbour. Tracks
/// the local sample spacing rather than the domain diameter, so the kernel
/// can resolve decision-boundary features finer than the domain; shrinks as
/// the sample count grows. Falls back to 1 for degenerate sets; k is clamped
/// to the available neighbour count.
double median_knn_distance(const std::vector<std::array<double, 2>>& pts, int k);

/// Epsilon-insensitive SVR problem over 2-vectors with +/-1 targets.
struct SvrProblem {
  std::vector<std::array<double, 2>> x;
  std::vector<double> y;
  double C = 10.0;
  double epsilon_tube = 0.1;
  double sigma = 1.0;

  void validate() const;
};

struct SupportVector {
  double phi = 0.0;
  double theta = 0.0;
  double beta = 0.0;  // alpha - alpha*, nonzero by construction
};

struct TrainingDiagnostics {
  double dual_objective = 0.0;  // maximized dual at termination
  double kkt_residual = 0.0;    // final max violation (<= tol on success)
  int n_support = 0;
  int sweeps = 0;
  int pair_updates = 0;
  std::vector<double> dual_per_sweep;  // nondecreasing by construction
};

/// Trained score function f(x) = sum_i beta_i k(x_i, x) + b. Immutable.
class ScoreFunction {
 public:
  ScoreFunction() = default;
  ScoreFunction(double sigma, double bias, std::vector<SupportVector> svs)
      : sigma_(sigma), bias_(bias), svs_(std::move(svs)) {}

  /// Constant classifier: empty support set, score = bias everywhere.
  static ScoreFunction constant(double bias) { return ScoreFunction(1.0, bias, {}); }

  double score(const std::array<double, 2>& x) const;

  double sigma() const { return sigma_; }
  double bias() const { return bias_; }
  const std::vector<SupportVector>& support_vectors() const { return svs_; }
  const TrainingDiagnostics& diagnostics() const { return diag_; }

  nlohmann::ordered_json to_json() const;
  static ScoreFunction from_json(const nlohmann::json& j);

  friend ScoreFunction train_svr(const SvrProblem&, double, int);

 private:
  double sigma_ = 1.0;
  double bias_ = 0.0;
  std::vector<SupportVector> svs_;
  TrainingDiagnostics diag_;
};

/// Trains by sequential minimal optimization on the dual:
///   max  -1/2 sum_ij (a_i - a*_i)(a_j - a*_j) K_ij
///        - eps sum_i (a_i + a*_i) + sum_i y_i (a_i - a*_i)
///   s.t. sum_i (a_i - a*_i) = 0,  0 <= a_i, a*_i <= C,
/// selecting the maximal KKT-violating pair each iteration. Terminates when
/// the violation drops below tol; throws NonConvergence after max_passes
/// sweeps (one sweep = 2N pair updates).
ScoreFunction train_svr(const SvrProblem& problem, double tol = 1e-6, int max_passes = 10000);

}  // namespace cohesim
