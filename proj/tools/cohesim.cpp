// Command line front end: builds sampling databases, runs coupled
// interface simulations, verifies the numerics against independent
// references, and benchmarks server scaling.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure or
// exceeded budget, 4 verification failure.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cohesim/config.hpp"
#include "cohesim/errors.hpp"
#include "cohesim/interface_geom.hpp"
#include "cohesim/macro_driver.hpp"
#include "cohesim/material.hpp"
#include "cohesim/micro_model.hpp"
#include "cohesim/msnet.hpp"
#include "cohesim/plots.hpp"
#include "cohesim/rng.hpp"
#include "cohesim/ruc.hpp"
#include "cohesim/sampling_db.hpp"
#include "cohesim/svr.hpp"

namespace {

using namespace cohesim;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> servers;
  std::optional<int> threads;
  std::string out_dir;
};

RunConfig load_config(const std::string& path, const Overrides& ov) {
  RunConfig cfg = RunConfig::load(path);
  if (ov.seed) cfg.root_seed = *ov.seed;
  if (ov.servers) {
    if (*ov.servers < 1) throw ConfigError("--servers must be positive");
    cfg.servers = *ov.servers;
  }
  if (ov.threads) {
    if (*ov.threads < 1) throw ConfigError("--threads must be positive");
    cfg.workers_per_server = *ov.threads;
    cfg.threaded = *ov.threads > 1;
  }
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------------------
// build-db

int cmd_build_db(const RunConfig& cfg, bool tolerate_failures) {
  Ruc cell = cfg.make_cell();
  std::printf("cell: %d^3 voxels, %.1f%% particle phase, fingerprint %llu\n", cell.n,
              cell.phase_fraction_pct(1),
              static_cast<unsigned long long>(cell.fingerprint()));

  DbBuildParams base = cfg.db_params(cfg.gammas.front());
  auto directions =
      make_training_samples(base.n_training, base.resolved_phi_range(), base.seed);
  std::printf("measuring %d directions x %d segments (lambda %.3g um)...\n", base.n_training,
              base.n_segments, base.lambda_um);
  auto measurements = measure_directions(cell, base.lambda_um, base.n_segments, directions,
                                         base.loading_rate_per_s, base.max_build_seconds);

  ensure_dir(cfg.database_dir());
  int failed = 0;
  for (double gamma : cfg.gammas) {
    DbBuildParams params = cfg.db_params(gamma);
    OfflineDatabase db = OfflineDatabase::assemble(measurements, params, cell);
    db.save(cfg.db_path(gamma));
    {
      std::ofstream audit = open_out(cfg.audit_path(gamma));
      write_audit_csv(measurements, params, audit);
    }
    failed = db.failed_samples();

    std::string shape;
    for (const DbSegment& seg : db.segments()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %d/%d", seg.n_tm, seg.n_fm);
      shape += buf;
    }
    std::printf("gamma=%g: tm/fm per segment%s -> %s\n", gamma, shape.c_str(),
                cfg.db_path(gamma).c_str());
  }

  if (failed > 0) {
    std::fprintf(stderr, "%d training solves failed; their segments were labeled FM\n", failed);
    if (!tolerate_failures) {
      std::fprintf(stderr, "refusing to accept a database with failed samples "
                           "(pass --tolerate-failures to keep it)\n");
      return kExitNumerical;
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

void write_run_outputs(const std::string& dir, const RunOutput& run) {
  ensure_dir(dir);
  {
    std::ofstream out = open_out(dir + "/steps.csv");
    run.write_steps_csv(out);
  }
  {
    std::ofstream out = open_out(dir + "/elements.csv");
    run.write_elements_csv(out);
  }
  {
    std::ofstream out = open_out(dir + "/timings.csv");
    run.write_timings_csv(out);
  }
  {
    std::ofstream out = open_out(dir + "/trace.jsonl");
    write_trace_jsonl(run.trace, out);
  }
}

std::string gamma_label(double gamma) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "gamma_%g", gamma);
  return buf;
}

int check_run(const std::string& name, const RunOutput& run) {
  auto violations = validate_trace(run.trace);
  if (!violations.empty()) {
    std::fprintf(stderr, "%s: %zu trace violations, first: %s\n", name.c_str(),
                 violations.size(), violations.front().c_str());
    return kExitNumerical;
  }
  if (run.halted_at_step >= 0) {
    std::fprintf(stderr, "%s: halted at step %d: %s\n", name.c_str(), run.halted_at_step,
                 run.halt_reason.c_str());
    return kExitNumerical;
  }
  return kExitOk;
}

std::vector<std::array<double, 2>> reaction_curve(const RunOutput& run) {
  std::vector<std::array<double, 2>> pts{{0.0, 0.0}};
  for (const StepRecord& s : run.steps) pts.push_back({s.delta_mm, s.reaction_n});
  return pts;
}

int cmd_run(const RunConfig& cfg) {
  Ruc cell = cfg.make_cell();
  InterfaceMesh mesh = cfg.make_mesh();

  std::vector<OfflineDatabase> dbs;
  dbs.reserve(cfg.gammas.size());
  for (double gamma : cfg.gammas) {
    std::string path = cfg.db_path(gamma);
    if (!fs::exists(path)) {
      throw ConfigError("database " + path + " not found; run build-db first");
    }
    dbs.push_back(OfflineDatabase::load(path));
  }

  DriverNetConfig net = cfg.net_config();
  std::printf("mesh: %d elements over %.3g mm, cell %d^3, %d server(s)\n",
              static_cast<int>(mesh.elements.size()), mesh.total_arc_mm, cell.n, net.servers);

  ensure_dir(cfg.out_dir);
  struct Entry {
    std::string name;
    double gamma = 0.0;
    RunOutput run;
  };
  std::vector<Entry> entries;

  entries.push_back({"forced_fm", 0.0,
                     run_simulation(mesh, cell, ModelPolicy::forced_fm(), cfg.program, net)});
  entries.push_back({"forced_tm", 0.0,
                     run_simulation(mesh, cell, ModelPolicy::forced_tm(), cfg.program, net)});
  for (size_t g = 0; g < cfg.gammas.size(); ++g) {
    entries.push_back({gamma_label(cfg.gammas[g]), cfg.gammas[g],
                       run_simulation(mesh, cell, ModelPolicy::adaptive(dbs[g]), cfg.program,
                                      net)});
  }

  int exit_code = kExitOk;
  for (const Entry& e : entries) {
    write_run_outputs(cfg.out_dir + "/" + e.name, e.run);
    int rc = check_run(e.name, e.run);
    if (rc != kExitOk) exit_code = rc;
  }

  const RunOutput& fm = entries[0].run;
  std::vector<std::pair<double, const RunOutput*>> adaptive;
  for (size_t g = 0; g < cfg.gammas.size(); ++g) {
    adaptive.push_back({cfg.gammas[g], &entries[2 + g].run});
  }

  if (exit_code == kExitOk) {
    auto rows = speedup_report(fm, adaptive);
    std::ofstream out = open_out(cfg.out_dir + "/speedup.csv");
    out << "label,gamma,final_tm_fraction,t_fm_over_t_am\n";
    for (const SpeedupRow& r : rows) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%g,%.6f,%.4f\n", r.label.c_str(), r.gamma,
                    r.final_tm_fraction, r.t_fm_over_t_am);
      out << buf;
    }
  }

  {
    std::ofstream out = open_out(cfg.out_dir + "/traction_error.csv");
    out << "run,gamma,step,element,arc_s,error_pct\n";
    for (size_t i = 1; i < entries.size(); ++i) {
      auto errs = traction_field_error(entries[i].run, fm);
      for (const TractionErrorStep& step : errs) {
        if (!step.pct) continue;
        for (size_t e = 0; e < step.pct->size(); ++e) {
          char buf[200];
          std::snprintf(buf, sizeof(buf), "%s,%g,%d,%zu,%.6f,%.8g\n", entries[i].name.c_str(),
                        entries[i].gamma, step.step, e, mesh.elements[e].arc_s, (*step.pct)[e]);
          out << buf;
        }
      }
    }
  }

  std::string plots_dir = cfg.out_dir + "/plots";
  ensure_dir(plots_dir);
  {
    PlotSpec spec;
    spec.title = "Reaction vs applied opening";
    spec.x_label = "opening delta [mm]";
    spec.y_label = "reaction [N per unit depth]";
    for (const Entry& e : entries) {
      spec.series.push_back({e.name, reaction_curve(e.run), ""});
      spec.provenance.push_back(e.name + "/steps.csv");
    }
    write_svg_plot(plots_dir + "/reaction_vs_delta.svg", spec);
  }
  {
    PlotSpec spec;
    spec.title = "Taylor-model fraction vs applied opening";
    spec.x_label = "opening delta [mm]";
    spec.y_label = "TM fraction";
    for (size_t g = 0; g < cfg.gammas.size(); ++g) {
      const Entry& e = entries[2 + g];
      std::vector<std::array<double, 2>> pts{{0.0, 1.0}};
      for (const StepRecord& s : e.run.steps) pts.push_back({s.delta_mm, s.tm_fraction});
      spec.series.push_back({e.name, pts, ""});
      spec.provenance.push_back(e.name + "/steps.csv");
    }
    write_svg_plot(plots_dir + "/tm_fraction_vs_delta.svg", spec);
  }
  {
    PlotSpec spec;
    spec.title = "Final-step traction deviation along the interface";
    spec.x_label = "arc position s";
    spec.y_label = "deviation [% of max FM traction]";
    bool any = false;
    for (size_t i = 1; i < entries.size(); ++i) {
      auto errs = traction_field_error(entries[i].run, fm);
      for (auto it = errs.rbegin(); it != errs.rend(); ++it) {
        if (!it->pct) continue;
        std::vector<std::array<double, 2>> pts;
        for (size_t e = 0; e < it->pct->size(); ++e) {
          pts.push_back({mesh.elements[e].arc_s, (*it->pct)[e]});
        }
        spec.series.push_back({entries[i].name, pts, ""});
        any = true;
        break;
      }
    }
    spec.provenance.push_back("traction_error.csv");
    if (any) write_svg_plot(plots_dir + "/traction_error_vs_arc.svg", spec);
  }

  std::printf("%-12s %14s %16s %10s\n", "run", "peak react [N]", "final TM fraction", "wall [s]");
  for (const Entry& e : entries) {
    std::printf("%-12s %14.5f %16.3f %10.2f\n", e.name.c_str(), e.run.peak_reaction_n(),
                e.run.final_tm_fraction(), e.run.total_wall_s);
  }
  if (exit_code == kExitOk) std::printf("outputs in %s\n", cfg.out_dir.c_str());
  return exit_code;
}

// ---------------------------------------------------------------------------
// verify

struct SuiteResult {
  std::string name;
  bool pass = false;
  double residual = 0.0;
  std::string note;
};

// Independent energy route: S must equal 2 dW/dC of the degraded split
// potential. Central differences on symmetric perturbations.
double gradient_residual(const MaterialParams& mat, Rng& rng) {
  auto energy = [&](const Tensor3& C, const DamageState& d) {
    double J = std::sqrt(C.det());
    return (1.0 - d.omega_d) * dev_energy(unimodular(C), mat.mu) +
           (1.0 - d.omega_v) * vol_energy(J, mat.kappa);
  };

  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor3 A = Tensor3::identity();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) A(i, j) += 0.25 * (2.0 * rng.next_double() - 1.0);
    }
    Tensor3 C = A.transpose() * A;
    DamageState d;
    d.omega_d = 0.6 * rng.next_double();
    d.omega_v = 0.6 * rng.next_double();

    Tensor3 S = pk2_stress(C, d, mat);
    Tensor3 S_fd;
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        double h = 1e-6 * (1.0 + std::abs(C(i, j)));
        Tensor3 Cp = C, Cm = C;
        Cp(i, j) += h;
        Cm(i, j) -= h;
        if (i != j) {
          Cp(j, i) += h;
          Cm(j, i) -= h;
        }
        double dW = (energy(Cp, d) - energy(Cm, d)) / (2.0 * h);
        double s = (i == j) ? 2.0 * dW : dW;
        S_fd(i, j) = s;
        S_fd(j, i) = s;
      }
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        num += (S(i, j) - S_fd(i, j)) * (S(i, j) - S_fd(i, j));
        den += S(i, j) * S(i, j);
      }
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
  }
  return worst;
}

SuiteResult suite_gradient(const RunConfig& cfg) {
  Rng rng(derive_stream(cfg.root_seed, "verify-gradient"));
  double worst = gradient_residual(load_material(cfg.matrix_file), rng);
  if (!cfg.particle_file.empty()) {
    worst = std::max(worst, gradient_residual(load_material(cfg.particle_file), rng));
  }
  return {"stress-gradient", worst < 1e-5, worst, "max rel FD deviation"};
}

SuiteResult suite_fm_tm(const RunConfig& cfg) {
  RucSpec spec;
  spec.n = std::min(cfg.ruc_n, 6);
  spec.l_ruc_um = cfg.l_ruc_um;
  spec.l_c_um = cfg.l_c_um;
  spec.matrix = load_material(cfg.matrix_file);
  spec.particle = spec.matrix;
  Ruc base = make_ruc(spec);
  FemGrid grid(base.n);

  Rng rng(derive_stream(cfg.root_seed, "verify-fmtm"));
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Vec3 jump{2.0 * rng.next_double() - 1.0, 2.0 * rng.next_double() - 1.0,
              1.5 * rng.next_double()};
    Tensor3 F0 = macro_F_from_jump(jump, Vec3{0, 0, 1}, base.l_c_um);
    Ruc tm_cell = base;
    Ruc fm_cell = base;
    MicroResult tm = taylor_traction(F0, tm_cell, 1.0);
    MicroResult fm = full_model_solve(F0, fm_cell, 1.0, {}, &grid);
    double scale = std::max(fm.traction_mpa.norm(), 1e-12);
    worst = std::max(worst, (fm.traction_mpa - tm.traction_mpa).norm() / scale);
  }
  return {"fm-tm-homogeneous", worst < 1e-8, worst, "max rel traction gap"};
}

// Accelerated projected gradient on the exact dual in (alpha, alpha*): box
// [0, C]^(2n) plus the balance constraint, projected by bisection on the
// shared shift. Slow but independent of the production SMO path.
double qp_dual_objective(const SvrProblem& p) {
  const int n = static_cast<int>(p.x.size());
  std::vector<double> K(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) K[i * n + j] = gaussian_kernel(p.x[i], p.x[j], p.sigma);
  }

  auto project = [&](std::vector<double>& a, std::vector<double>& s) {
    double lo = -2.0 * p.C, hi = 2.0 * p.C;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        sum += std::clamp(a[i] - mid, 0.0, p.C) - std::clamp(s[i] + mid, 0.0, p.C);
      }
      (sum > 0.0 ? lo : hi) = mid;
    }
    double lam = 0.5 * (lo + hi);
    for (int i = 0; i < n; ++i) {
      a[i] = std::clamp(a[i] - lam, 0.0, p.C);
      s[i] = std::clamp(s[i] + lam, 0.0, p.C);
    }
  };

  double row_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    double r = 0.0;
    for (int j = 0; j < n; ++j) r += std::abs(K[i * n + j]);
    row_norm = std::max(row_norm, r);
  }
  const double step = 1.0 / (2.0 * row_norm + 1e-9);

  std::vector<double> a(n, 0.0), s(n, 0.0), ya = a, ys = s, pa, ps, kb(n);
  double t_prev = 1.0;
  for (int iter = 0; iter < 30000; ++iter) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += K[i * n + j] * (ya[j] - ys[j]);
      kb[i] = acc;
    }
    pa = a;
    ps = s;
    for (int i = 0; i < n; ++i) {
      a[i] = ya[i] + step * (p.y[i] - p.epsilon_tube - kb[i]);
      s[i] = ys[i] + step * (-p.y[i] - p.epsilon_tube + kb[i]);
    }
    project(a, s);
    double t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
    double m = (t_prev - 1.0) / t;
    for (int i = 0; i < n; ++i) {
      ya[i] = a[i] + m * (a[i] - pa[i]);
      ys[i] = s[i] + m * (s[i] - ps[i]);
    }
    t_prev = t;
  }

  double quad = 0.0, lin = 0.0;
  for (int i = 0; i < n; ++i) {
    double bi = a[i] - s[i];
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += K[i * n + j] * (a[j] - s[j]);
    quad += bi * acc;
    lin += p.y[i] * bi - p.epsilon_tube * (a[i] + s[i]);
  }
  return -0.5 * quad + lin;
}

SuiteResult suite_svr_qp(const RunConfig& cfg) {
  Rng rng(derive_stream(cfg.root_seed, "verify-svr"));
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    SvrProblem p;
    p.C = 1.0;
    p.epsilon_tube = 0.1;
    for (int i = 0; i < 10; ++i) {
      double phi = rng.next_double() * 6.28318530717958648;
      double th = rng.next_double() * 3.14159265358979324;
      p.x.push_back({phi, th});
      p.y.push_back(std::sin(phi) + 0.3 * th > 0.5 ? 1.0 : -1.0);
    }
    p.sigma = median_pairwise_distance(p.x);

    ScoreFunction f = train_svr(p);
    double gap = std::abs(f.diagnostics().dual_objective - qp_dual_objective(p));
    worst = std::max(worst, gap);
  }
  return {"svr-vs-qp", worst < 1e-4, worst, "max dual objective gap"};
}

SuiteResult suite_lpt(const RunConfig& cfg) {
  Rng rng(derive_stream(cfg.root_seed, "verify-lpt"));
  double worst = 0.0;
  bool ok = true;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    int n = 1 + static_cast<int>(rng.next_below(7));
    int m = 1 + static_cast<int>(rng.next_below(3));
    std::vector<Job> jobs(n);
    std::vector<double> costs(n);
    for (int i = 0; i < n; ++i) {
      jobs[i].id = i;
      jobs[i].element = i;
      costs[i] = jobs[i].cost_s = 0.05 + rng.next_double();
    }

    double best = std::numeric_limits<double>::infinity();
    std::vector<double> load(m, 0.0);
    std::function<void(int)> place = [&](int i) {
      double cur = *std::max_element(load.begin(), load.end());
      if (cur >= best) return;
      if (i == n) {
        best = cur;
        return;
      }
      for (int sv = 0; sv < m; ++sv) {
        load[sv] += costs[i];
        place(i + 1);
        load[sv] -= costs[i];
      }
    };
    place(0);

    double lpt = plan_schedule(0, jobs, m, {}).makespan_s;
    double bound = (4.0 / 3.0 - 1.0 / (3.0 * m)) * best;
    worst = std::max(worst, lpt / best - 1.0);
    if (lpt < best - 1e-12 || lpt > bound + 1e-12) ok = false;
  }
  return {"lpt-vs-exhaustive", ok, worst, "max makespan excess over optimum"};
}

SuiteResult suite_fingerprint(const RunConfig& cfg) {
  Ruc cell = cfg.make_cell();
  int checked = 0;
  for (double gamma : cfg.gammas) {
    std::string path = cfg.db_path(gamma);
    if (!fs::exists(path)) continue;
    OfflineDatabase db = OfflineDatabase::load(path);  // ConfigError on corruption
    if (db.fingerprint() != cell.fingerprint()) {
      return {"db-fingerprint", false, 1.0, path + " was trained on a different cell"};
    }
    if (std::abs(db.lambda_um() - cfg.database.lambda_um) > 1e-12 ||
        db.n_segments() != cfg.database.n_segments) {
      return {"db-fingerprint", false, 1.0, path + " disagrees with the configured geometry"};
    }
    ++checked;
  }
  std::string note = checked ? std::to_string(checked) + " database file(s) match the cell"
                             : "no database files yet; nothing to check";
  return {"db-fingerprint", true, 0.0, note};
}

int cmd_verify(const RunConfig& cfg) {
  std::vector<SuiteResult> results;
  std::vector<std::pair<std::string, std::function<SuiteResult()>>> suites = {
      {"stress-gradient", [&] { return suite_gradient(cfg); }},
      {"fm-tm-homogeneous", [&] { return suite_fm_tm(cfg); }},
      {"svr-vs-qp", [&] { return suite_svr_qp(cfg); }},
      {"lpt-vs-exhaustive", [&] { return suite_lpt(cfg); }},
      {"db-fingerprint", [&] { return suite_fingerprint(cfg); }},
  };

  bool all_pass = true;
  for (auto& [name, fn] : suites) {
    SuiteResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {name, false, std::numeric_limits<double>::quiet_NaN(), e.what()};
    }
    all_pass = all_pass && r.pass;
    std::printf("verify %-18s %s  residual %.3e  (%s)\n", r.name.c_str(),
                r.pass ? "pass" : "FAIL", r.residual, r.note.c_str());
  }
  if (!all_pass) {
    std::fprintf(stderr, "verification failed\n");
    return kExitVerification;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench-scaling

int cmd_bench(const RunConfig& cfg, const std::vector<int>& servers) {
  if (servers.empty()) throw ConfigError("--servers needs at least one entry");
  for (int s : servers) {
    if (s < 1) throw ConfigError("--servers entries must be positive");
  }

  Ruc cell = cfg.make_cell();
  InterfaceMesh mesh = cfg.make_mesh();

  ensure_dir(cfg.out_dir);
  std::ofstream out = open_out(cfg.out_dir + "/bench_scaling.csv");
  out << "servers,wall_s,speedup\n";

  double first_wall = 0.0;
  std::string reference_steps;
  std::printf("%8s %10s %8s\n", "servers", "wall [s]", "speedup");
  for (size_t i = 0; i < servers.size(); ++i) {
    DriverNetConfig net = cfg.net_config();
    net.servers = servers[i];
    RunOutput run = run_simulation(mesh, cell, ModelPolicy::forced_tm(), cfg.program, net);
    if (run.halted_at_step >= 0) {
      std::fprintf(stderr, "bench run halted: %s\n", run.halt_reason.c_str());
      return kExitNumerical;
    }

    std::ostringstream steps;
    run.write_steps_csv(steps);
    if (i == 0) {
      first_wall = run.total_wall_s;
      reference_steps = steps.str();
    } else if (steps.str() != reference_steps) {
      std::fprintf(stderr, "results changed with server count; scheduling must not leak "
                           "into physics\n");
      return kExitNumerical;
    }

    double speedup = run.total_wall_s > 0.0 ? first_wall / run.total_wall_s : 1.0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.4f,%.3f\n", servers[i], run.total_wall_s, speedup);
    out << buf;
    std::printf("%8d %10.4f %8.3f\n", servers[i], run.total_wall_s, speedup);
  }
  std::printf("wrote %s/bench_scaling.csv\n", cfg.out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const NonConvergence& e) {
    std::fprintf(stderr, "error: solver did not converge: %s (residual %.3e)\n", e.what(),
                 e.residual);
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cohesive-interface multiscale simulator"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  bool tolerate_failures = false;
  std::vector<int> bench_servers{1, 2, 4};

  auto add_common = [&](CLI::App* sub, bool with_servers) {
    sub->add_option("-c,--config", config_path, "run configuration JSON")->required();
    sub->add_option("--seed", ov.seed, "override seeds.root");
    if (with_servers) sub->add_option("--servers", ov.servers, "override msnet.servers");
    sub->add_option("--threads", ov.threads,
                    "worker threads per server (>1 switches to threaded execution)");
    sub->add_option("--out", ov.out_dir, "override out_dir");
  };

  CLI::App* build = app.add_subcommand(
      "build-db", "measure training directions and write one database per tolerance");
  add_common(build, false);
  build->add_flag("--tolerate-failures", tolerate_failures,
                  "keep the database even when training solves failed");

  CLI::App* run = app.add_subcommand(
      "run", "run forced baselines plus one adaptive simulation per tolerance");
  add_common(run, true);

  CLI::App* verify =
      app.add_subcommand("verify", "check the numerics against independent references");
  add_common(verify, false);

  CLI::App* bench = app.add_subcommand("bench-scaling", "time the same run over server counts");
  add_common(bench, false);
  bench->add_option("--servers", bench_servers, "server counts to time")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;  // --help exits clean, usage errors are config errors
  }

  return guarded([&]() -> int {
    RunConfig cfg = load_config(config_path, ov);
    if (build->parsed()) return cmd_build_db(cfg, tolerate_failures);
    if (run->parsed()) return cmd_run(cfg);
    if (verify->parsed()) return cmd_verify(cfg);
    return cmd_bench(cfg, bench_servers);
  });
}
