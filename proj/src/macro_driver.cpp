#include "cohesim/macro_driver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cohesim/errors.hpp"
#include "cohesim/log.hpp"
#include "cohesim/micro_model.hpp"

namespace cohesim {

namespace {

// Complete material failure at this fraction of the layer thickness; failed
// elements advance the crack front.
constexpr double kFailureElongation = 0.1;

// Keeps micro time steps positive when the applied jump does not move.
constexpr double kMinDt = 1e-9;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

Vec3 opening_direction(const CohesiveElement& e, double shear_mix) {
  if (shear_mix == 0.0) return e.normal;
  const Vec3 tangent{e.rotation(0, 0), e.rotation(0, 1), e.rotation(0, 2)};
  return (e.normal + tangent * shear_mix).normalized();
}

}  // namespace

void LoadProgram::validate() const {
  if (delta_max_mm < 0.0) throw ConfigError("program: opening must be nonnegative");
  if (steps < 1) throw ConfigError("program: need at least one step");
  if (rate_cap_per_s <= 0.0) throw ConfigError("program: rate cap must be positive");
  if (initial_crack_s < 0.0 || initial_crack_s > 1.0)
    throw ConfigError("program: crack root must lie on the arc parameter [0, 1]");
}

std::vector<Vec3> jump_field(double delta_mm, const InterfaceMesh& mesh,
                             const OpeningProfile& profile) {
  std::vector<Vec3> jumps;
  jumps.reserve(mesh.elements.size());
  for (const auto& e : mesh.elements) {
    double g = 0.0;
    if (profile.s_crack > 0.0 && e.arc_s < profile.s_crack) {
      const double x = 1.0 - e.arc_s / profile.s_crack;
      g = x * x;
    }
    const double magnitude_um = delta_mm * 1000.0 * g;
    jumps.push_back(opening_direction(e, profile.shear_mix) * magnitude_um);
  }
  return jumps;
}

double RunOutput::final_tm_fraction() const {
  return steps.empty() ? 1.0 : steps.back().tm_fraction;
}

double RunOutput::peak_reaction_n() const {
  double peak = 0.0;
  for (const auto& s : steps) peak = std::max(peak, s.reaction_n);
  return peak;
}

void RunOutput::write_steps_csv(std::ostream& out) const {
  out << "step,delta_mm,dt_s,reaction_n,tm_fraction,n_tm,n_fm,s_crack,max_jump_um,mean_omega\n";
  for (const auto& s : steps)
    out << s.step << ',' << fmt(s.delta_mm) << ',' << fmt(s.dt_s) << ',' << fmt(s.reaction_n)
        << ',' << fmt(s.tm_fraction) << ',' << s.n_tm << ',' << s.n_fm << ',' << fmt(s.s_crack)
        << ',' << fmt(s.max_jump_um) << ',' << fmt(s.mean_omega) << '\n';
}

void RunOutput::write_elements_csv(std::ostream& out) const {
  out << "step,element,model,jump_um,t1_mpa,t2_mpa,t3_mpa,omega_bar,iterations,seconds\n";
  for (const auto& e : elements)
    out << e.step << ',' << e.element << ',' << to_string(e.model) << ',' << fmt(e.jump_um) << ','
        << fmt(e.traction_mpa[0]) << ',' << fmt(e.traction_mpa[1]) << ',' << fmt(e.traction_mpa[2])
        << ',' << fmt(e.omega_bar) << ',' << e.iterations << ',' << fmt(e.seconds) << '\n';
}

void RunOutput::write_timings_csv(std::ostream& out) const {
  out << "step,wall_s,migrations\n";
  for (const auto& s : steps)
    out << s.step << ',' << fmt(s.wall_s) << ',' << s.migrations << '\n';
}

RunOutput run_simulation(const InterfaceMesh& mesh, const Ruc& cell_template,
                         const ModelPolicy& policy, const LoadProgram& program,
                         const DriverNetConfig& net_config) {
  program.validate();
  if (mesh.elements.empty()) throw ConfigError("interface mesh has no cohesive elements");
  if (mesh.l_c_um != cell_template.l_c_um)
    throw ConfigError("interface and cell template disagree on the layer thickness");
  if (policy.mode == ModelPolicy::Mode::Adaptive) {
    if (policy.db == nullptr) throw ConfigError("adaptive policy needs a database");
    if (policy.db->fingerprint() != cell_template.fingerprint())
      throw ConfigError("database was trained on a different cell (fingerprint mismatch)");
  }

  const int n_elem = static_cast<int>(mesh.elements.size());
  const double l_c = cell_template.l_c_um;
  const Vec3 cell_normal{0.0, 0.0, 1.0};

  MsNet net(net_config.servers, net_config.workers_per_server, net_config.threaded,
            net_config.transport_seed);
  for (const auto& e : mesh.elements) net.host(e.id, cell_template);

  const FemGrid grid(cell_template.n);
  const SolveFn solve = [&grid](const Job& job, Ruc& cell) {
    if (job.model == MicroModel::FM) return full_model_solve(job.F0, cell, job.dt, {}, &grid);
    return taylor_traction(job.F0, cell, job.dt);
  };

  RunOutput out;
  out.n_elements = n_elem;
  std::vector<MicroModel> models(static_cast<std::size_t>(n_elem), MicroModel::TM);
  if (policy.mode == ModelPolicy::Mode::ForcedFm)
    models.assign(static_cast<std::size_t>(n_elem), MicroModel::FM);
  std::vector<bool> failed(static_cast<std::size_t>(n_elem), false);
  std::vector<Vec3> prev_jumps(static_cast<std::size_t>(n_elem));
  double s_crack = program.initial_crack_s;
  int failed_count = 0;

  for (int step = 1; step <= program.steps; ++step) {
    const auto wall_start = std::chrono::steady_clock::now();
    const double delta = program.delta_max_mm * step / program.steps;
    const OpeningProfile profile{s_crack, program.shear_mix};
    const auto jumps = jump_field(delta, mesh, profile);

    double max_move = 0.0;
    for (int i = 0; i < n_elem; ++i)
      max_move = std::max(max_move, (jumps[static_cast<std::size_t>(i)] -
                                     prev_jumps[static_cast<std::size_t>(i)])
                                        .norm());
    const double dt = std::max(max_move / (l_c * program.rate_cap_per_s), kMinDt);

    std::vector<Job> jobs;
    jobs.reserve(static_cast<std::size_t>(n_elem));
    for (int i = 0; i < n_elem; ++i) {
      const auto& e = mesh.elements[static_cast<std::size_t>(i)];
      const Vec3 local = e.rotation * jumps[static_cast<std::size_t>(i)];
      auto& model = models[static_cast<std::size_t>(i)];
      if (policy.mode == ModelPolicy::Mode::Adaptive && model == MicroModel::TM) {
        // One-way switch: once full, stays full.
        const auto c = policy.db->classify(local, cell_template.fingerprint());
        if (c.model == MicroModel::FM) model = MicroModel::FM;
      }
      Job job;
      job.id = i;
      job.element = e.id;
      job.model = model;
      job.F0 = macro_F_from_jump(local, cell_normal, l_c);
      job.dt = dt;
      jobs.push_back(job);
    }
    net.estimate_costs(jobs);
    const Schedule schedule = net.plan(step, jobs);

    std::vector<JobResult> results;
    try {
      results = net.execute_step(schedule, jobs, solve);
    } catch (const NonConvergence& e) {
      out.halted_at_step = step;
      out.halt_reason = e.what();
      out.trace = net.trace();
      COHESIM_LOG_ERROR("macro step %d halted: %s", step, e.what());
      return out;
    }

    StepRecord rec;
    rec.step = step;
    rec.delta_mm = delta;
    rec.dt_s = dt;
    rec.s_crack = s_crack;
    rec.migrations = static_cast<int>(schedule.migrations.size());
    double omega_sum = 0.0;
    for (int i = 0; i < n_elem; ++i) {
      const auto& e = mesh.elements[static_cast<std::size_t>(i)];
      const auto& r = results[static_cast<std::size_t>(i)];
      if (r.element != e.id) throw DomainError("mesh element ids must be sequential from zero");
      const Vec3 t_global = e.rotation.transpose() * r.result.traction_mpa;
      const double jn = jumps[static_cast<std::size_t>(i)].norm();

      rec.reaction_n += t_global.dot(opening_direction(e, program.shear_mix)) * e.area_mm2;
      rec.max_jump_um = std::max(rec.max_jump_um, jn);
      omega_sum += r.result.omega_bar;
      ++(models[static_cast<std::size_t>(i)] == MicroModel::TM ? rec.n_tm : rec.n_fm);

      ElementRecord er;
      er.step = step;
      er.element = e.id;
      er.model = models[static_cast<std::size_t>(i)];
      er.jump_um = jn;
      er.traction_mpa = t_global;
      er.omega_bar = r.result.omega_bar;
      er.iterations = r.result.iterations;
      er.seconds = r.result.seconds;
      out.elements.push_back(er);

      if (!failed[static_cast<std::size_t>(i)] && jn >= kFailureElongation * l_c) {
        failed[static_cast<std::size_t>(i)] = true;
        ++failed_count;
      }
    }
    rec.tm_fraction = static_cast<double>(rec.n_tm) / n_elem;
    rec.mean_omega = omega_sum / n_elem;
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - wall_start;
    rec.wall_s = wall.count();
    out.total_wall_s += rec.wall_s;
    out.steps.push_back(rec);

    s_crack = std::min(1.0, program.initial_crack_s +
                                static_cast<double>(failed_count) / n_elem);
    prev_jumps = jumps;
  }
  out.trace = net.trace();
  return out;
}

std::vector<TractionErrorStep> traction_field_error(const RunOutput& run,
                                                    const RunOutput& fm_run) {
  if (run.n_elements != fm_run.n_elements || run.steps.size() != fm_run.steps.size())
    throw DomainError("traction error needs runs over the same mesh and program");
  const std::size_t n = static_cast<std::size_t>(run.n_elements);

  std::vector<TractionErrorStep> out;
  for (std::size_t s = 0; s < run.steps.size(); ++s) {
    TractionErrorStep rec;
    rec.step = run.steps[s].step;

    double fm_sup = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      fm_sup = std::max(fm_sup, fm_run.elements[s * n + i].traction_mpa.norm());
    if (fm_sup > 0.0) {
      std::vector<double> pct(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = run.elements[s * n + i];
        const auto& b = fm_run.elements[s * n + i];
        if (a.element != b.element)
          throw DomainError("traction error needs matching element ordering");
        pct[i] = (b.traction_mpa - a.traction_mpa).norm() / fm_sup * 100.0;
      }
      rec.pct = std::move(pct);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SpeedupRow> speedup_report(
    const RunOutput& fm_run,
    const std::vector<std::pair<double, const RunOutput*>>& adaptive_runs) {
  if (fm_run.total_wall_s <= 0.0) throw DomainError("baseline run carries no wall time");
  std::vector<SpeedupRow> rows;
  rows.push_back({"forced-FM", 0.0, fm_run.final_tm_fraction(), 1.0});
  for (const auto& [gamma, run] : adaptive_runs) {
    if (run->total_wall_s <= 0.0) throw DomainError("adaptive run carries no wall time");
    SpeedupRow row;
    row.label = "gamma=" + fmt_short(gamma);
    row.gamma = gamma;
    row.final_tm_fraction = run->final_tm_fraction();
    row.t_fm_over_t_am = fm_run.total_wall_s / run->total_wall_s;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cohesim
