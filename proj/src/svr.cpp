#include "cohesim/svr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cohesim/errors.hpp"

namespace cohesim {

double gaussian_kernel(const std::array<double, 2>& xi, const std::array<double, 2>& xj,
                       double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_kernel: sigma must be positive");
  const double dx = xi[0] - xj[0];
  const double dy = xi[1] - xj[1];
  return std::exp(-(dx * dx + dy * dy) / (sigma * sigma));
}

double median_pairwise_distance(const std::vector<std::array<double, 2>>& pts) {
  std::vector<double> d;
  d.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      d.push_back(std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]));
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double m = d[d.size() / 2];
  return m > 0.0 ? m : 1.0;
}

double median_knn_distance(const std::vector<std::array<double, 2>>& pts, int k) {
  if (k < 1) throw DomainError("median_knn_distance: k must be >= 1");
  const std::size_t n = pts.size();
  if (n < 2) return 1.0;
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  std::vector<double> knn;
  knn.reserve(n);
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d[m++] = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk - 1), d.end());
    knn.push_back(d[kk - 1]);
  }
  std::nth_element(knn.begin(), knn.begin() + static_cast<std::ptrdiff_t>(knn.size() / 2),
                   knn.end());
  const double m = knn[knn.size() / 2];
  return m > 0.0 ? m : 1.0;
}

void SvrProblem::validate() const {
  if (x.empty() || x.size() != y.size()) throw DomainError("SvrProblem: empty or ragged data");
  if (!(C > 0.0) || !(sigma > 0.0) || !(epsilon_tube >= 0.0))
    throw DomainError("SvrProblem: C, sigma must be > 0 and epsilon >= 0");
  for (const auto& p : x)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw DomainError("SvrProblem: non-finite sample");
  for (double v : y)
    if (!std::isfinite(v)) throw DomainError("SvrProblem: non-finite target");
}

double ScoreFunction::score(const std::array<double, 2>& x) const {
  double f = bias_;
  for (const auto& sv : svs_) f += sv.beta * gaussian_kernel({sv.phi, sv.theta}, x, sigma_);
  return f;
}

nlohmann::ordered_json ScoreFunction::to_json() const {
  nlohmann::ordered_json j;
  j["sigma"] = sigma_;
  j["bias"] = bias_;
  auto sv = nlohmann::ordered_json::array();
  for (const auto& s : svs_) sv.push_back({{"phi", s.phi}, {"theta", s.theta}, {"beta", s.beta}});
  j["sv"] = std::move(sv);
  return j;
}

ScoreFunction ScoreFunction::from_json(const nlohmann::json& j) {
  std::vector<SupportVector> svs;
  for (const auto& s : j.at("sv"))
    svs.push_back({s.at("phi").get<double>(), s.at("theta").get<double>(),
                   s.at("beta").get<double>()});
  return ScoreFunction(j.at("sigma").get<double>(), j.at("bias").get<double>(), std::move(svs));
}

// ---------------------------------------------------------------------------
// SMO in the 2N box form: variables z_p in [0, C] with p < N meaning alpha_i
// and p >= N meaning alpha*_i, signs s_p = +/-1, minimizing
//   1/2 z^T Q z + c^T z,  Q_pq = s_p s_q K_pq,  c_p = eps - s_p y_p,
// subject to s^T z = 0. This is the negated dual above.

ScoreFunction train_svr(const SvrProblem& problem, double tol, int max_passes) {
  problem.validate();
  if (!(tol > 0.0)) throw DomainError("train_svr: tol must be positive");

  const std::size_t n = problem.x.size();
  const std::size_t n2 = 2 * n;
  const double C = problem.C;
  const double eps = problem.epsilon_tube;

  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double k = gaussian_kernel(problem.x[i], problem.x[j], problem.sigma);
      K[i * n + j] = k;
      K[j * n + i] = k;
    }

  const auto sgn = [n](std::size_t p) { return p < n ? 1.0 : -1.0; };
  const auto smp = [n](std::size_t p) { return p < n ? p : p - n; };

  std::vector<double> z(n2, 0.0);
  std::vector<double> grad(n2);  // Q z + c, maintained incrementally
  for (std::size_t p = 0; p < n2; ++p) grad[p] = eps - sgn(p) * problem.y[smp(p)];

  const auto objective_min = [&]() {
    // 1/2 z^T Q z + c^T z = 1/2 z^T (grad + c); cheaper via the identity.
    double v = 0.0;
    for (std::size_t p = 0; p < n2; ++p)
      v += 0.5 * z[p] * (grad[p] + (eps - sgn(p) * problem.y[smp(p)]));
    return v;
  };

  TrainingDiagnostics diag;
  diag.dual_per_sweep.push_back(-objective_min());

  const int sweep_len = static_cast<int>(n2);
  long updates = 0;
  double violation = std::numeric_limits<double>::infinity();
  bool converged = false;

  while (!converged) {
    // Maximal violating pair: i maximizes -s G over variables with upward
    // headroom, j minimizes -s G over variables with downward headroom.
    double m = -std::numeric_limits<double>::infinity();
    double M = std::numeric_limits<double>::infinity();
    std::size_t sel_i = n2, sel_j = n2;
    for (std::size_t p = 0; p < n2; ++p) {
      const double v = -sgn(p) * grad[p];
      const bool up = (sgn(p) > 0.0) ? (z[p] < C) : (z[p] > 0.0);
      const bool dn = (sgn(p) > 0.0) ? (z[p] > 0.0) : (z[p] < C);
      if (up && v > m) {
        m = v;
        sel_i = p;
      }
      if (dn && v < M) {
        M = v;
        sel_j = p;
      }
    }
    violation = m - M;
    if (violation <= tol || sel_i == n2 || sel_j == n2) {
      converged = true;
      break;
    }
    if (diag.sweeps >= max_passes) break;

    const std::size_t i = sel_i, j = sel_j;
    const std::size_t a = smp(i), b = smp(j);
    const double eta = K[a * n + a] + K[b * n + b] - 2.0 * K[a * n + b];

    // Feasible step length along dz_i = s_i d, dz_j = -s_j d.
    const double cap_i = (sgn(i) > 0.0) ? C - z[i] : z[i];
    const double cap_j = (sgn(j) > 0.0) ? z[j] : C - z[j];
    double d = std::min(cap_i, cap_j);
    if (eta > 1e-12) d = std::min(d, violation / eta);
    if (d <= 0.0) break;  // numerically pinned; treated as converged below

    z[i] += sgn(i) * d;
    z[j] -= sgn(j) * d;
    z[i] = std::clamp(z[i], 0.0, C);
    z[j] = std::clamp(z[j], 0.0, C);
    for (std::size_t p = 0; p < n2; ++p)
      grad[p] += sgn(p) * d * (K[smp(p) * n + a] - K[smp(p) * n + b]);

    ++updates;
    if (updates % sweep_len == 0) {
      ++diag.sweeps;
      const double dual = -objective_min();
      const double prev = diag.dual_per_sweep.back();
      if (dual < prev - 1e-9 * (1.0 + std::abs(prev)))
        throw std::logic_error("SMO dual objective decreased across a sweep");
      diag.dual_per_sweep.push_back(dual);
    }
  }

  diag.kkt_residual = std::max(violation, 0.0);
  diag.pair_updates = static_cast<int>(updates);
  if (!converged)
    throw NonConvergence("SMO did not reach tolerance", static_cast<int>(updates),
                         diag.kkt_residual);

  // Bias from the multiplier of the equality constraint: free variables give
  // it exactly; otherwise any value in the final feasibility interval works
  // and we take the midpoint.
  double bias;
  {
    double sum = 0.0;
    int free_count = 0;
    const double edge = 1e-8 * C;
    for (std::size_t p = 0; p < n2; ++p)
      if (z[p] > edge && z[p] < C - edge) {
        sum += -sgn(p) * grad[p];
        ++free_count;
      }
    if (free_count > 0) {
      bias = sum / free_count;
    } else {
      double m = -std::numeric_limits<double>::infinity();
      double M = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < n2; ++p) {
        const double v = -sgn(p) * grad[p];
        const bool up = (sgn(p) > 0.0) ? (z[p] < C) : (z[p] > 0.0);
        const bool dn = (sgn(p) > 0.0) ? (z[p] > 0.0) : (z[p] < C);
        if (up) m = std::max(m, v);
        if (dn) M = std::min(M, v);
      }
      bias = 0.5 * (m + M);
    }
  }

  std::vector<SupportVector> svs;
  const double beta_cut = 1e-12 * std::max(1.0, C);
  for (std::size_t i = 0; i < n; ++i) {
    const double beta = z[i] - z[i + n];
    if (std::abs(beta) > beta_cut)
      svs.push_back({problem.x[i][0], problem.x[i][1], beta});
  }

  ScoreFunction f(problem.sigma, bias, std::move(svs));
  diag.dual_objective = -objective_min();
  diag.n_support = static_cast<int>(f.support_vectors().size());
  f.diag_ = std::move(diag);
  return f;
}

}  // namespace cohesim
