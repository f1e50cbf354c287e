#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cohesim/interface_geom.hpp"
#include "cohesim/msnet.hpp"
#include "cohesim/ruc.hpp"
#include "cohesim/sampling_db.hpp"

namespace cohesim {

/// Quasi-static loading: the applied opening ramps linearly to delta_max over
/// `steps` equal increments. Step durations follow from the rate cap, so the
/// jump rate at every element stays at or below cap * l_c by construction.
struct LoadProgram {
  double delta_max_mm = 0.02;
  int steps = 20;
  double rate_cap_per_s = 1.0;   // bound on ||d(jump)/dt|| / l_c
  double shear_mix = 0.0;        // tangential fraction of the opening direction
  double initial_crack_s = 0.35; // profile root on the arc parameter

  void validate() const;
};

/// Kinematic opening profile along the arc: g(s) = max(0, 1 - s/s_crack)^2,
/// zero beyond the root. The root advances as elements fail.
struct OpeningProfile {
  double s_crack = 0.35;
  double shear_mix = 0.0;
};

/// Per-element jumps (um, global frame) for an applied opening delta:
/// jump(s) = delta * g(s) * d(s) with d the unit normal blended with
/// shear_mix of the in-plane tangent.
std::vector<Vec3> jump_field(double delta_mm, const InterfaceMesh& mesh,
                             const OpeningProfile& profile);

struct ModelPolicy {
  enum class Mode { Adaptive, ForcedFm, ForcedTm };
  Mode mode = Mode::ForcedTm;
  const OfflineDatabase* db = nullptr;  // Adaptive only

  static ModelPolicy adaptive(const OfflineDatabase& db) {
    return {Mode::Adaptive, &db};
  }
  static ModelPolicy forced_fm() { return {Mode::ForcedFm, nullptr}; }
  static ModelPolicy forced_tm() { return {Mode::ForcedTm, nullptr}; }
};

struct DriverNetConfig {
  int servers = 1;
  int workers_per_server = 1;
  bool threaded = false;
  std::uint64_t transport_seed = 0;
};

struct StepRecord {
  int step = 0;
  double delta_mm = 0.0;
  double dt_s = 0.0;
  double reaction_n = 0.0;  // per unit depth
  double tm_fraction = 0.0;
  int n_tm = 0;
  int n_fm = 0;
  double s_crack = 0.0;      // profile root used for this step
  double max_jump_um = 0.0;
  double mean_omega = 0.0;
  double wall_s = 0.0;       // timing; kept out of steps.csv
  int migrations = 0;        // schedule-dependent; kept out of steps.csv
};

struct ElementRecord {
  int step = 0;
  int element = 0;
  MicroModel model = MicroModel::TM;
  double jump_um = 0.0;
  Vec3 traction_mpa;  // global frame
  double omega_bar = 0.0;
  int iterations = 0;
  double seconds = 0.0;
};

struct RunOutput {
  std::vector<StepRecord> steps;
  std::vector<ElementRecord> elements;  // steps-major, elements ascending
  std::vector<TraceEvent> trace;
  int n_elements = 0;
  double total_wall_s = 0.0;
  int halted_at_step = -1;  // -1: ran to completion
  std::string halt_reason;

  double final_tm_fraction() const;
  double peak_reaction_n() const;

  /// Deterministic content only: identical (config, seed) runs produce the
  /// same bytes regardless of server count or measured timings.
  void write_steps_csv(std::ostream& out) const;
  /// Per-element rows; the trailing seconds column is the only timing field.
  void write_elements_csv(std::ostream& out) const;
  /// Wall time, predicted makespan and migration counts per step.
  void write_timings_csv(std::ostream& out) const;
};

/// Runs the macro loop: per step, map the applied opening to element jumps,
/// classify each element (one-way TM to FM switch), execute the micro jobs
/// through the multiscale network, and assemble the reaction as the arc
/// integral of traction against the opening direction.
///
/// Elements are classified on the jump expressed in their own cell frame,
/// the frame the database was trained in. Micro non-convergence halts the
/// run and returns the partial records with `halted_at_step` set. Adaptive
/// policies require the database fingerprint to match the cell template
/// (ConfigError otherwise).
RunOutput run_simulation(const InterfaceMesh& mesh, const Ruc& cell_template,
                         const ModelPolicy& policy, const LoadProgram& program,
                         const DriverNetConfig& net_config = {});

/// Per-element traction deviation from a forced-FM reference, in percent of
/// the largest FM element traction of that step. Steps where the FM field
/// vanishes entirely carry no value.
struct TractionErrorStep {
  int step = 0;
  std::optional<std::vector<double>> pct;  // element-ordered
};

std::vector<TractionErrorStep> traction_field_error(const RunOutput& run, const RunOutput& fm_run);

struct SpeedupRow {
  std::string label;
  double gamma = 0.0;  // 0 for baselines
  double final_tm_fraction = 0.0;
  double t_fm_over_t_am = 0.0;
};

/// Wall-clock ratios of the FM baseline to each adaptive run.
std::vector<SpeedupRow> speedup_report(
    const RunOutput& fm_run,
    const std::vector<std::pair<double, const RunOutput*>>& adaptive_runs);

}  // namespace cohesim
