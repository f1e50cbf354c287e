#include "cohesim/micro_model.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "cohesim/errors.hpp"
#include "cohesim/log.hpp"

namespace cohesim {

namespace {

constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Tensor3 macro_F_from_jump(const Vec3& jump_um, const Vec3& normal, double l_c_um) {
  if (std::abs(normal.norm() - 1.0) > 1e-12) throw DomainError("interface normal must be unit");
  if (!(l_c_um > 0.0)) throw DomainError("layer thickness must be > 0");
  const Tensor3 F = Tensor3::identity() + Tensor3::outer(jump_um, normal) * (1.0 / l_c_um);
  if (!(F.det() > 0.0)) throw InadmissibleState("jump inverts the interface layer");
  return F;
}

MicroResult taylor_traction(const Tensor3& F0, Ruc& ruc, double dt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(F0.det() > 0.0)) throw InadmissibleState("macro deformation inverts the cell");
  const Tensor3 C0 = F0.transpose() * F0;
  const double J = F0.det();

  // Driving energies depend only on the phase constants at uniform C0.
  struct Drive {
    double W_dev, U_vol, Y_d, Y_v;
  };
  std::vector<Drive> drives(ruc.phases.size());
  for (std::size_t p = 0; p < ruc.phases.size(); ++p) {
    const MaterialParams& m = ruc.phases[p];
    const double W = dev_energy(unimodular(C0), m.mu);
    const double U = vol_energy(J, m.kappa);
    drives[p] = {W, U, energy_release(W, U, J, DamageBranch::Deviatoric),
                 energy_release(W, U, J, DamageBranch::Volumetric)};
  }

  // Voxels sharing (phase, damage) see identical updates; cache per group but
  // keep the per-voxel accumulation order of the naive loop.
  struct Group {
    std::uint8_t phase;
    DamageState before, after;
    Tensor3 P;
    double energy;
  };
  std::vector<Group> groups;

  Tensor3 sum;
  double energy_sum = 0.0;
  const int nv = ruc.voxel_count();
  for (int v = 0; v < nv; ++v) {
    const std::uint8_t ph = ruc.phase_map[static_cast<std::size_t>(v)];
    const DamageState before = ruc.damage[static_cast<std::size_t>(v)];
    const Group* g = nullptr;
    for (const Group& cand : groups)
      if (cand.phase == ph && cand.before == before) {
        g = &cand;
        break;
      }
    if (!g) {
      const MaterialParams& m = ruc.phases[ph];
      const Drive& d = drives[ph];
      Group ng;
      ng.phase = ph;
      ng.before = before;
      ng.after = damage_update(before, d.Y_d, d.Y_v, dt, m);
      ng.P = F0 * pk2_stress(C0, ng.after, m);
      ng.energy = (1.0 - before.omega_d) * d.W_dev + (1.0 - before.omega_v) * d.U_vol;
      groups.push_back(ng);
      g = &groups.back();
    }
    ruc.damage[static_cast<std::size_t>(v)] = g->after;
    sum += g->P;
    energy_sum += g->energy;
  }

  MicroResult res;
  const double inv = 1.0 / static_cast<double>(nv);
  const Tensor3 avg = sum * inv;
  res.traction_mpa = {avg(0, 2), avg(1, 2), avg(2, 2)};
  res.mean_energy_mpa = energy_sum * inv;
  res.omega_bar = ruc.mean_damage();
  res.iterations = 0;
  res.converged = true;
  res.seconds = seconds_since(t0);
  return res;
}

std::optional<double> traction_model_error(const Vec3& t_fm, const Vec3& t_tm) {
  const double ref = t_fm.norm();
  if (ref == 0.0) return std::nullopt;
  return (t_fm - t_tm).norm() / ref;
}

// --------------------------------------------------------------------------
// Full model: trilinear hexahedra on the voxel grid, 2x2x2 quadrature.
// Fluctuations are pinned on the +-Y3 faces and periodic across the lateral
// faces; periodicity is imposed by mapping boundary nodes onto their masters.

struct FemGrid::Impl {
  int n = 0;
  int ndof = 0;
  std::vector<int> node_dof;                 // (n+1)^3 -> dof base, -1 when pinned
  std::vector<std::array<int, 8>> elem_dof;  // voxel order, local node a = di+2dj+4dk
  std::array<std::array<Vec3, 8>, 8> grad_ref{};  // [gauss point][node], reference coords
  Eigen::SparseMatrix<double> pattern;            // compressed zeros
  std::vector<std::array<int, 576>> scatter;      // 24x24 value slots per element, -1 pinned
};

FemGrid::FemGrid(int n) : impl_(std::make_unique<Impl>()) {
  if (n < 2) throw DomainError("grid resolution must be >= 2");
  Impl& G = *impl_;
  G.n = n;
  const int npe = n + 1;
  const auto nid = [npe](int i, int j, int k) { return (k * npe + j) * npe + i; };

  G.node_dof.assign(static_cast<std::size_t>(npe) * npe * npe, -1);
  int next = 0;
  for (int k = 1; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) G.node_dof[static_cast<std::size_t>(nid(i, j, k))] = 3 * next++;
  G.ndof = 3 * next;
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i)
        if (i == n || j == n)
          G.node_dof[static_cast<std::size_t>(nid(i, j, k))] =
              G.node_dof[static_cast<std::size_t>(nid(i % n, j % n, k))];

  G.elem_dof.resize(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::array<int, 8>& ed = G.elem_dof[static_cast<std::size_t>((k * n + j) * n + i)];
        for (int a = 0; a < 8; ++a) {
          const int di = a & 1, dj = (a >> 1) & 1, dk = (a >> 2) & 1;
          ed[static_cast<std::size_t>(a)] =
              G.node_dof[static_cast<std::size_t>(nid(i + di, j + dj, k + dk))];
        }
      }

  for (int gp = 0; gp < 8; ++gp) {
    const double gx = ((gp & 1) ? kGauss : -kGauss);
    const double gy = ((gp & 2) ? kGauss : -kGauss);
    const double gz = ((gp & 4) ? kGauss : -kGauss);
    for (int a = 0; a < 8; ++a) {
      const double s1 = (a & 1) ? 1.0 : -1.0;
      const double s2 = (a & 2) ? 1.0 : -1.0;
      const double s3 = (a & 4) ? 1.0 : -1.0;
      G.grad_ref[static_cast<std::size_t>(gp)][static_cast<std::size_t>(a)] = {
          s1 / 8.0 * (1.0 + gy * s2) * (1.0 + gz * s3),
          s2 / 8.0 * (1.0 + gx * s1) * (1.0 + gz * s3),
          s3 / 8.0 * (1.0 + gx * s1) * (1.0 + gy * s2)};
    }
  }

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(G.elem_dof.size() * 576);
  for (const std::array<int, 8>& ed : G.elem_dof)
    for (int a = 0; a < 8; ++a) {
      if (ed[static_cast<std::size_t>(a)] < 0) continue;
      for (int b = 0; b < 8; ++b) {
        if (ed[static_cast<std::size_t>(b)] < 0) continue;
        for (int i = 0; i < 3; ++i)
          for (int c = 0; c < 3; ++c)
            trips.emplace_back(ed[static_cast<std::size_t>(a)] + i,
                               ed[static_cast<std::size_t>(b)] + c, 0.0);
      }
    }
  G.pattern.resize(G.ndof, G.ndof);
  G.pattern.setFromTriplets(trips.begin(), trips.end());
  G.pattern.makeCompressed();

  const int* outer = G.pattern.outerIndexPtr();
  const int* inner = G.pattern.innerIndexPtr();
  G.scatter.resize(G.elem_dof.size());
  for (std::size_t e = 0; e < G.elem_dof.size(); ++e) {
    const std::array<int, 8>& ed = G.elem_dof[e];
    std::array<int, 576>& sc = G.scatter[e];
    sc.fill(-1);
    for (int a = 0; a < 8; ++a)
      for (int i = 0; i < 3; ++i)
        for (int b = 0; b < 8; ++b)
          for (int c = 0; c < 3; ++c) {
            if (ed[static_cast<std::size_t>(a)] < 0 || ed[static_cast<std::size_t>(b)] < 0) continue;
            const int row = ed[static_cast<std::size_t>(a)] + i;
            const int col = ed[static_cast<std::size_t>(b)] + c;
            const int* lo = inner + outer[col];
            const int* hi = inner + outer[col + 1];
            const int* it = std::lower_bound(lo, hi, row);
            sc[static_cast<std::size_t>((3 * a + i) * 24 + 3 * b + c)] =
                static_cast<int>(it - inner);
          }
  }
}

FemGrid::~FemGrid() = default;
FemGrid::FemGrid(FemGrid&&) noexcept = default;
FemGrid& FemGrid::operator=(FemGrid&&) noexcept = default;
int FemGrid::resolution() const { return impl_->n; }
int FemGrid::dof_count() const { return impl_->ndof; }

namespace {

/// One solve's worth of mutable state. Owns the matrix copy so concurrent
/// solves sharing a FemGrid never touch shared storage.
struct MicroSolver {
  const FemGrid::Impl& G;
  const Ruc& ruc;
  const MicroSolverOptions& opts;
  Tensor3 F_total;  // current stage target
  double wdet = 0.0;
  double abs_tol = 0.0;
  std::array<std::array<Vec3, 8>, 8> grad{};  // physical coords
  Eigen::VectorXd u, r, d, u_try, r_try;
  Eigen::SparseMatrix<double> K;
  int iters = 0;
  double last_rn = 0.0;

  MicroSolver(const FemGrid::Impl& grid, const Ruc& cell, const MicroSolverOptions& options)
      : G(grid), ruc(cell), opts(options) {
    const double h = cell.voxel_edge_um();
    wdet = (h / 2.0) * (h / 2.0) * (h / 2.0);
    double mu_ref = 0.0;
    for (const MaterialParams& m : cell.phases) mu_ref = std::max(mu_ref, m.mu);
    abs_tol = opts.abs_tol_scale * mu_ref * h * h * std::sqrt(static_cast<double>(G.ndof));
    for (int gp = 0; gp < 8; ++gp)
      for (int a = 0; a < 8; ++a)
        grad[static_cast<std::size_t>(gp)][static_cast<std::size_t>(a)] =
            G.grad_ref[static_cast<std::size_t>(gp)][static_cast<std::size_t>(a)] * (2.0 / h);
    u = Eigen::VectorXd::Zero(G.ndof);
    r = Eigen::VectorXd::Zero(G.ndof);
    r_try = Eigen::VectorXd::Zero(G.ndof);
    K = G.pattern;
  }

  Tensor3 deformation(const Eigen::VectorXd& disp, std::size_t e, int gp) const {
    Tensor3 F = F_total;
    const std::array<int, 8>& ed = G.elem_dof[e];
    const std::array<Vec3, 8>& g = grad[static_cast<std::size_t>(gp)];
    for (int a = 0; a < 8; ++a) {
      const int base = ed[static_cast<std::size_t>(a)];
      if (base < 0) continue;
      const Vec3& ga = g[static_cast<std::size_t>(a)];
      for (int i = 0; i < 3; ++i) {
        const double ui = disp[base + i];
        F(i, 0) += ui * ga[0];
        F(i, 1) += ui * ga[1];
        F(i, 2) += ui * ga[2];
      }
    }
    return F;
  }

  /// Energy-consistent residual; false when any quadrature point has det F <= 0.
  bool residual(const Eigen::VectorXd& disp, Eigen::VectorXd& out) const {
    out.setZero();
    for (std::size_t e = 0; e < G.elem_dof.size(); ++e) {
      const MaterialParams& mat = ruc.phases[ruc.phase_map[e]];
      const DamageState& dmg = ruc.damage[e];
      const std::array<int, 8>& ed = G.elem_dof[e];
      for (int gp = 0; gp < 8; ++gp) {
        const Tensor3 F = deformation(disp, e, gp);
        if (!(F.det() > 0.0)) return false;
        const Tensor3 C = F.transpose() * F;
        const Tensor3 P = F * pk2_stress(C, dmg, mat);
        const std::array<Vec3, 8>& g = grad[static_cast<std::size_t>(gp)];
        for (int a = 0; a < 8; ++a) {
          const int base = ed[static_cast<std::size_t>(a)];
          if (base < 0) continue;
          const Vec3& ga = g[static_cast<std::size_t>(a)];
          for (int i = 0; i < 3; ++i)
            out[base + i] += wdet * (P(i, 0) * ga[0] + P(i, 1) * ga[1] + P(i, 2) * ga[2]);
        }
      }
    }
    return true;
  }

  void assemble() {
    std::fill(K.valuePtr(), K.valuePtr() + K.nonZeros(), 0.0);
    Tensor3 S;
    Tangent4 CC;
    double ke[24][24];
    double Ea[8][27];  // per node a: sum_j CC[m][j][l][q] g_a[j], index (m*3+l)*3+q
    for (std::size_t e = 0; e < G.elem_dof.size(); ++e) {
      const MaterialParams& mat = ruc.phases[ruc.phase_map[e]];
      const DamageState& dmg = ruc.damage[e];
      for (auto& row : ke) std::fill(row, row + 24, 0.0);
      for (int gp = 0; gp < 8; ++gp) {
        const Tensor3 F = deformation(u, e, gp);
        const Tensor3 C = F.transpose() * F;
        pk2_stress_tangent(C, dmg, mat, S, CC);
        const std::array<Vec3, 8>& g = grad[static_cast<std::size_t>(gp)];

        for (int a = 0; a < 8; ++a) {
          const Vec3& ga = g[static_cast<std::size_t>(a)];
          for (int m = 0; m < 3; ++m)
            for (int l = 0; l < 3; ++l)
              for (int q = 0; q < 3; ++q)
                Ea[a][(m * 3 + l) * 3 + q] = CC[static_cast<std::size_t>(((m * 3 + 0) * 3 + l) * 3 + q)] * ga[0] +
                                             CC[static_cast<std::size_t>(((m * 3 + 1) * 3 + l) * 3 + q)] * ga[1] +
                                             CC[static_cast<std::size_t>(((m * 3 + 2) * 3 + l) * 3 + q)] * ga[2];
        }
        for (int a = 0; a < 8; ++a) {
          const Vec3& ga = g[static_cast<std::size_t>(a)];
          const Vec3 Sga = S * ga;
          for (int b = 0; b < 8; ++b) {
            const Vec3& gb = g[static_cast<std::size_t>(b)];
            const double geo = wdet * gb.dot(Sga);
            // W_mq = sum_l Ea[m][l][q] g_b[l]; block = F W F^T
            double W[3][3];
            for (int m = 0; m < 3; ++m)
              for (int q = 0; q < 3; ++q)
                W[m][q] = Ea[a][(m * 3 + 0) * 3 + q] * gb[0] + Ea[a][(m * 3 + 1) * 3 + q] * gb[1] +
                          Ea[a][(m * 3 + 2) * 3 + q] * gb[2];
            double FW[3][3];
            for (int i = 0; i < 3; ++i)
              for (int q = 0; q < 3; ++q)
                FW[i][q] = F(i, 0) * W[0][q] + F(i, 1) * W[1][q] + F(i, 2) * W[2][q];
            for (int i = 0; i < 3; ++i)
              for (int k = 0; k < 3; ++k) {
                const double mat_part =
                    FW[i][0] * F(k, 0) + FW[i][1] * F(k, 1) + FW[i][2] * F(k, 2);
                ke[3 * a + i][3 * b + k] += wdet * mat_part + (i == k ? geo : 0.0);
              }
          }
        }
      }
      const std::array<int, 576>& sc = G.scatter[e];
      double* vals = K.valuePtr();
      for (int lr = 0; lr < 24; ++lr)
        for (int lc = 0; lc < 24; ++lc) {
          const int slot = sc[static_cast<std::size_t>(lr * 24 + lc)];
          if (slot >= 0) vals[slot] += ke[lr][lc];
        }
    }
  }

  Eigen::VectorXd solve_linear(const Eigen::VectorXd& rhs) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(opts.cg_tol);
    cg.setMaxIterations(std::max(1000, 4 * G.ndof));
    cg.compute(K);
    Eigen::VectorXd x = cg.solve(rhs);
    if (cg.info() == Eigen::Success) return x;
    COHESIM_LOG_DEBUG("cg stalled after %d iterations, using direct factorization",
                      static_cast<int>(cg.iterations()));
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(K);
    if (lu.info() == Eigen::Success) return lu.solve(rhs);
    // Damped retry for a singular tangent (softening branch).
    const double scale = K.diagonal().cwiseAbs().maxCoeff();
    Eigen::SparseMatrix<double> eye(G.ndof, G.ndof);
    eye.setIdentity();
    for (double tau = 1e-8; tau <= 1e-2; tau *= 100.0) {
      Eigen::SparseMatrix<double> Kd = K + eye * (tau * scale);
      lu.compute(Kd);
      if (lu.info() == Eigen::Success) return lu.solve(rhs);
    }
    COHESIM_LOG_WARN("tangent factorization failed at every damping level");
    return rhs;  // preconditioned-gradient-free fallback; line search will judge it
  }

  bool solve_stage(const Tensor3& Fs) {
    F_total = Fs;
    if (!residual(u, r)) {
      // A warm start carried from a previous stage may be inadmissible here.
      u.setZero();
      if (!residual(u, r)) return false;
    }
    const double rn0 = r.norm();
    last_rn = rn0;
    if (rn0 <= abs_tol) return true;
    const double stop = std::max(opts.rel_tol * rn0, abs_tol);
    double rn = rn0;
    for (int it = 0; it < opts.max_newton; ++it) {
      assemble();
      d = solve_linear(-r);
      bool accepted = false;
      double alpha = 1.0;
      for (int cut = 0; cut <= opts.max_backtracks; ++cut, alpha *= 0.5) {
        u_try = u + alpha * d;
        if (!residual(u_try, r_try)) continue;
        const double rn_try = r_try.norm();
        if (rn_try < rn) {
          accepted = true;
          rn = rn_try;
          break;
        }
      }
      ++iters;
      if (!accepted) return false;
      u.swap(u_try);
      r.swap(r_try);
      last_rn = rn;
      if (rn <= stop) return true;
    }
    return false;
  }

  /// Continuation along F(s) = I + s (F0 - I); bisects the increment on failure.
  bool advance(const Tensor3& F0, double s0, double s1, int depth) {
    const Tensor3 Fs = Tensor3::identity() + (F0 - Tensor3::identity()) * s1;
    const Eigen::VectorXd snapshot = u;
    if (solve_stage(Fs)) return true;
    if (depth >= opts.max_substep_depth) return false;
    u = snapshot;
    const double mid = 0.5 * (s0 + s1);
    if (!advance(F0, s0, mid, depth + 1)) return false;
    return advance(F0, mid, s1, depth + 1);
  }
};

}  // namespace

MicroResult full_model_solve(const Tensor3& F0, Ruc& ruc, double dt, const MicroSolverOptions& opts,
                             const FemGrid* grid) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(F0.det() > 0.0)) throw InadmissibleState("macro deformation inverts the cell");
  if (!(dt > 0.0)) throw DomainError("time step must be > 0");

  std::unique_ptr<FemGrid> local;
  if (grid == nullptr || grid->resolution() != ruc.n) {
    local = std::make_unique<FemGrid>(ruc.n);
    grid = local.get();
  }
  MicroSolver solver(*grid->impl_, ruc, opts);
  if (!solver.advance(F0, 0.0, 1.0, 0))
    throw NonConvergence("micro solve stalled at the smallest substep", solver.iters,
                         solver.last_rn);

  // Advance damage once from element-mean converged energies, then integrate
  // the traction with the advanced field.
  const std::size_t ne = solver.G.elem_dof.size();
  std::vector<DamageState> advanced(ne);
  double energy_sum = 0.0;
  for (std::size_t e = 0; e < ne; ++e) {
    const MaterialParams& mat = ruc.phases[ruc.phase_map[e]];
    const DamageState& dmg = ruc.damage[e];
    double Yd = 0.0, Yv = 0.0;
    for (int gp = 0; gp < 8; ++gp) {
      const Tensor3 F = solver.deformation(solver.u, e, gp);
      const double J = F.det();
      const Tensor3 C = F.transpose() * F;
      const double W = dev_energy(unimodular(C), mat.mu);
      const double U = vol_energy(J, mat.kappa);
      Yd += energy_release(W, U, J, DamageBranch::Deviatoric);
      Yv += energy_release(W, U, J, DamageBranch::Volumetric);
      energy_sum += solver.wdet * ((1.0 - dmg.omega_d) * W + (1.0 - dmg.omega_v) * U);
    }
    advanced[e] = damage_update(dmg, Yd / 8.0, Yv / 8.0, dt, mat);
  }
  for (std::size_t e = 0; e < ne; ++e) ruc.damage[e] = advanced[e];

  Tensor3 sum;
  for (std::size_t e = 0; e < ne; ++e) {
    const MaterialParams& mat = ruc.phases[ruc.phase_map[e]];
    for (int gp = 0; gp < 8; ++gp) {
      const Tensor3 F = solver.deformation(solver.u, e, gp);
      const Tensor3 C = F.transpose() * F;
      sum += F * pk2_stress(C, ruc.damage[e], mat);
    }
  }
  const double volume = ruc.l_ruc_um * ruc.l_ruc_um * ruc.l_ruc_um;
  const Tensor3 avg = sum * (solver.wdet / volume);

  MicroResult res;
  res.traction_mpa = {avg(0, 2), avg(1, 2), avg(2, 2)};
  res.mean_energy_mpa = energy_sum / volume;
  res.omega_bar = ruc.mean_damage();
  res.iterations = solver.iters;
  res.converged = true;
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace cohesim
