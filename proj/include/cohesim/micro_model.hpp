#pragma once

#include <memory>
#include <optional>

#include "cohesim/ruc.hpp"
#include "cohesim/tensor.hpp"

namespace cohesim {

/// Outcome of one micro solve. Immutable value object, safe to transmit
/// between workers. The macro driver must not consume the traction unless
/// converged is set.
struct MicroResult {
  Vec3 traction_mpa{};
  double omega_bar = 0.0;       // mean voxel damage after the update
  double mean_energy_mpa = 0.0; // volume-averaged stored energy, entry damage
  int iterations = 0;           // Newton iterations (0 for the closed form)
  double seconds = 0.0;
  bool converged = false;
};

struct MicroSolverOptions {
  double rel_tol = 1e-8;
  double abs_tol_scale = 1e-12;  // times mu_ref * h^2 * sqrt(ndof)
  int max_newton = 30;
  int max_backtracks = 8;
  int max_substep_depth = 6;
  double cg_tol = 1e-10;
};

/// Interface deformation gradient I + (1/l_c) jump (x) normal. The normal must
/// be unit to 1e-12 and l_c > 0; a jump driving det F <= 0 (interpenetration
/// beyond model validity) raises InadmissibleState.
Tensor3 macro_F_from_jump(const Vec3& jump_um, const Vec3& normal, double l_c_um);

/// Closed-form micro model: every voxel sees F = F0, damage advances per
/// voxel, and the traction is the volume average of F S contracted with the
/// cell normal e3. Voxels are grouped by (phase, damage) so the cost is
/// O(#groups), with per-voxel accumulation order preserved so the result is
/// bitwise equal to the naive loop.
MicroResult taylor_traction(const Tensor3& F0, Ruc& ruc, double dt);

/// Cached discretization structure for one grid resolution: DOF numbering with
/// lateral periodicity, sparsity pattern, scatter tables. Immutable after
/// construction and shareable across concurrent solves of distinct cells.
class FemGrid {
 public:
  explicit FemGrid(int n);
  ~FemGrid();
  FemGrid(FemGrid&&) noexcept;
  FemGrid& operator=(FemGrid&&) noexcept;

  int resolution() const;
  int dof_count() const;

  struct Impl;

 private:
  friend MicroResult full_model_solve(const Tensor3&, Ruc&, double, const MicroSolverOptions&,
                                      const FemGrid*);
  std::unique_ptr<Impl> impl_;
};

/// Full micro model: solves the fluctuation field on the voxel grid by Newton
/// with backtracking line search and load substepping. Fluctuations vanish on
/// the +-Y3 faces and repeat periodically across the four lateral faces.
/// Damage is held fixed during the solve and advanced once from the converged
/// element energies; the returned traction uses the advanced damage.
/// Throws NonConvergence when the smallest allowed substep still fails, and
/// InadmissibleState for det F0 <= 0. Passing a FemGrid of matching resolution
/// skips rebuilding the discretization tables.
MicroResult full_model_solve(const Tensor3& F0, Ruc& ruc, double dt,
                             const MicroSolverOptions& opts = {}, const FemGrid* grid = nullptr);

/// Relative traction error |t_fm - t_tm|/|t_fm|. A vanishing reference
/// traction makes the error unknowable; callers label such samples FM.
std::optional<double> traction_model_error(const Vec3& t_fm, const Vec3& t_tm);

}  // namespace cohesim
