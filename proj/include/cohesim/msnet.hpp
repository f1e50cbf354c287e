#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cohesim/micro_model.hpp"
#include "cohesim/model.hpp"
#include "cohesim/ruc.hpp"

namespace cohesim {

/// One micro solve request. The macro domain assigns one job per cohesive
/// element per step; the cell state itself lives on whichever server hosts
/// the element.
struct Job {
  int id = 0;
  int element = 0;
  MicroModel model = MicroModel::TM;
  Tensor3 F0;
  double dt = 0.0;
  double cost_s = 0.0;  // schedule weight, filled from the cost model
};

struct Migration {
  int element = 0;
  int from_server = 0;
  int to_server = 0;
};

/// Assignment of one step's jobs to servers plus the state handoffs needed
/// to honor it. job_server is indexed like the jobs vector; servers are
/// numbered from 1 (0 is the macro master).
struct Schedule {
  int step = 0;
  std::vector<int> job_server;
  std::vector<Migration> migrations;
  double makespan_s = 0.0;
};

struct JobResult {
  int element = 0;
  MicroModel model = MicroModel::TM;
  MicroResult result;
};

/// Largest-first assignment: jobs sorted by descending cost (ties by element
/// id) each go to the least-loaded server (ties to the lowest id). Emits a
/// migration for every job whose element is hosted elsewhere; unhosted
/// elements are placed without a handoff. Costs must be > 0.
Schedule plan_schedule(int step, const std::vector<Job>& jobs, int n_servers,
                       const std::map<int, int>& host_map);

/// Wall-time predictor keyed by (model, mean-damage bucket). Exponential
/// moving average with alpha = 0.3; the first observation seeds the average.
/// Cold start keeps the published FM:TM imbalance of 50:1.
class CostModel {
 public:
  explicit CostModel(double tm_cold_s = 0.02, double fm_cold_s = 1.0);

  /// Damage regime: 0 below 0.01, 1 up to 0.5, 2 beyond.
  static int bucket(double omega_bar);

  double estimate(MicroModel model, double omega_bar) const;
  void record(MicroModel model, double omega_bar, double seconds);

 private:
  std::array<double, 6> ema_;  // [2*bucket + model], negative = no history
  std::array<double, 2> cold_;
};

/// One simulated transport message. Addresses are "d0" for the macro master
/// or "s<id>.r<rank>" with rank 0 the server master. Byte counts model the
/// wire payload: migrations carry the per-voxel damage state split evenly
/// across the worker pair messages, geometry is template-shared.
struct TraceEvent {
  int step = 0;
  std::string src, dst;
  std::string kind;  // step_begin, migrate, dispatch, work, done, result, step_end
  int element = -1;
  long long bytes = 0;
};

std::optional<std::pair<int, int>> parse_address(const std::string& addr);

/// Checks the communication contract: inter-server messages only between
/// equal ranks, and no worker ever addresses a foreign master. Returns one
/// human-readable violation per offending line.
std::vector<std::string> validate_trace(const std::vector<TraceEvent>& events);
std::vector<std::string> validate_trace_file(std::istream& jsonl);

void write_trace_jsonl(const std::vector<TraceEvent>& events, std::ostream& out);
std::vector<TraceEvent> read_trace_jsonl(std::istream& in);

using SolveFn = std::function<MicroResult(const Job&, Ruc&)>;

struct ServerStatus {
  int id = 0;
  int workers = 0;
  std::vector<int> hosted;  // element ids, ascending
  double busy_s = 0.0;
};

/// In-process multiscale network: a macro master dispatching jobs to server
/// worker pools over typed mailboxes. Results and cell states are bitwise
/// independent of the server count, the threading mode and the transport
/// seed; only wall times vary. The trace records the canonical message
/// sequence implied by the schedule.
class MsNet {
 public:
  /// threaded=false runs the deterministic single-threaded mode that services
  /// mailboxes round-robin; the transport seed then permutes service order.
  MsNet(int servers, int workers_per_server, bool threaded = true,
        std::uint64_t transport_seed = 0);
  ~MsNet();
  MsNet(MsNet&&) noexcept;
  MsNet& operator=(MsNet&&) noexcept;

  int server_count() const;
  int workers_per_server() const;

  /// Initial placement, round-robin over servers in call order.
  void host(int element, Ruc cell);
  const Ruc& hosted_cell(int element) const;
  Ruc& hosted_cell_mut(int element);
  std::map<int, int> host_map() const;  // element -> server
  std::vector<ServerStatus> status() const;

  CostModel& cost_model();
  void estimate_costs(std::vector<Job>& jobs) const;

  Schedule plan(int step, const std::vector<Job>& jobs) const;

  /// Runs one step: migrations first, then dispatch, solve, gather. Results
  /// come back ordered by element id regardless of completion order. A
  /// failing solve aborts the step with the original exception; an injected
  /// message loss raises DeadlineError.
  std::vector<JobResult> execute_step(const Schedule& schedule, const std::vector<Job>& jobs,
                                      const SolveFn& solve);

  /// Test hook: the next result message for this element never arrives.
  void inject_result_loss(int element);

  const std::vector<TraceEvent>& trace() const;
  void clear_trace();

  /// Every hosted element lives on exactly one server and the central map
  /// agrees with the per-server sets.
  bool single_host_invariant() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cohesim
