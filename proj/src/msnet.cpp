#include "cohesim/msnet.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "cohesim/errors.hpp"
#include "cohesim/log.hpp"
#include "cohesim/rng.hpp"
#include "json.hpp"

namespace cohesim {

namespace {

constexpr long long kJobWireBytes = 88;     // F0, dt, job and element ids
constexpr long long kResultWireBytes = 56;  // traction, damage mean, energy, counters

std::string addr_master() { return "d0"; }

std::string addr(int server, int rank) {
  return "s" + std::to_string(server) + ".r" + std::to_string(rank);
}

}  // namespace

Schedule plan_schedule(int step, const std::vector<Job>& jobs, int n_servers,
                       const std::map<int, int>& host_map) {
  if (n_servers < 1) throw DomainError("need at least one server");
  for (const Job& j : jobs)
    if (!(j.cost_s > 0.0)) throw DomainError("job costs must be > 0");

  Schedule s;
  s.step = step;
  s.job_server.assign(jobs.size(), 0);

  std::vector<std::size_t> order(jobs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (jobs[a].cost_s != jobs[b].cost_s) return jobs[a].cost_s > jobs[b].cost_s;
    return jobs[a].element < jobs[b].element;
  });

  std::vector<double> load(static_cast<std::size_t>(n_servers), 0.0);
  for (std::size_t idx : order) {
    int best = 0;
    for (int srv = 1; srv < n_servers; ++srv)
      if (load[static_cast<std::size_t>(srv)] < load[static_cast<std::size_t>(best)]) best = srv;
    s.job_server[idx] = best + 1;
    load[static_cast<std::size_t>(best)] += jobs[idx].cost_s;
  }
  s.makespan_s = load.empty() ? 0.0 : *std::max_element(load.begin(), load.end());

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto it = host_map.find(jobs[i].element);
    if (it != host_map.end() && it->second != s.job_server[i])
      s.migrations.push_back({jobs[i].element, it->second, s.job_server[i]});
  }
  return s;
}

CostModel::CostModel(double tm_cold_s, double fm_cold_s) : cold_{tm_cold_s, fm_cold_s} {
  ema_.fill(-1.0);
}

int CostModel::bucket(double omega_bar) {
  if (omega_bar < 0.01) return 0;
  if (omega_bar <= 0.5) return 1;
  return 2;
}

double CostModel::estimate(MicroModel model, double omega_bar) const {
  const int mi = model == MicroModel::FM ? 1 : 0;
  const double e = ema_[static_cast<std::size_t>(2 * bucket(omega_bar) + mi)];
  return e >= 0.0 ? e : cold_[static_cast<std::size_t>(mi)];
}

void CostModel::record(MicroModel model, double omega_bar, double seconds) {
  const int mi = model == MicroModel::FM ? 1 : 0;
  double& e = ema_[static_cast<std::size_t>(2 * bucket(omega_bar) + mi)];
  e = e < 0.0 ? seconds : 0.3 * seconds + 0.7 * e;
}

std::optional<std::pair<int, int>> parse_address(const std::string& a) {
  if (a == "d0") return std::make_pair(0, 0);
  const std::size_t dot = a.find(".r");
  if (a.size() < 4 || a[0] != 's' || dot == std::string::npos) return std::nullopt;
  int server = 0, rank = 0;
  const char* sb = a.data() + 1;
  const auto r1 = std::from_chars(sb, a.data() + dot, server);
  if (r1.ec != std::errc{} || r1.ptr != a.data() + dot) return std::nullopt;
  const char* rb = a.data() + dot + 2;
  const auto r2 = std::from_chars(rb, a.data() + a.size(), rank);
  if (r2.ec != std::errc{} || r2.ptr != a.data() + a.size()) return std::nullopt;
  if (server < 1 || rank < 0) return std::nullopt;
  return std::make_pair(server, rank);
}

std::vector<std::string> validate_trace(const std::vector<TraceEvent>& events) {
  std::vector<std::string> violations;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& ev = events[i];
    const auto src = parse_address(ev.src);
    const auto dst = parse_address(ev.dst);
    const std::string where = "event " + std::to_string(i) + " (" + ev.kind + ")";
    if (!src || !dst) {
      violations.push_back(where + ": unparseable address " + ev.src + " -> " + ev.dst);
      continue;
    }
    const auto [ss, sr] = *src;
    const auto [ds, dr] = *dst;
    if (ss != ds) {
      if (sr >= 1 && dr == 0)
        violations.push_back(where + ": worker " + ev.src + " addresses foreign master " + ev.dst);
      else if (sr != dr)
        violations.push_back(where + ": unequal-rank inter-server message " + ev.src + " -> " +
                             ev.dst);
    }
  }
  return violations;
}

void write_trace_jsonl(const std::vector<TraceEvent>& events, std::ostream& out) {
  for (const TraceEvent& ev : events) {
    nlohmann::ordered_json j{{"step", ev.step},   {"src", ev.src},         {"dst", ev.dst},
                             {"kind", ev.kind},   {"element", ev.element}, {"bytes", ev.bytes}};
    out << j.dump() << '\n';
  }
}

std::vector<TraceEvent> read_trace_jsonl(std::istream& in) {
  std::vector<TraceEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      TraceEvent ev;
      ev.step = j.at("step").get<int>();
      ev.src = j.at("src").get<std::string>();
      ev.dst = j.at("dst").get<std::string>();
      ev.kind = j.at("kind").get<std::string>();
      ev.element = j.at("element").get<int>();
      ev.bytes = j.at("bytes").get<long long>();
      events.push_back(std::move(ev));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("trace line unreadable: ") + e.what());
    }
  }
  return events;
}

std::vector<std::string> validate_trace_file(std::istream& jsonl) {
  return validate_trace(read_trace_jsonl(jsonl));
}

// --------------------------------------------------------------------------

struct MsNet::Impl {
  struct ServerState {
    int id = 0;
    std::map<int, Ruc> cells;
    double busy_s = 0.0;
  };

  int n_servers = 1;
  int workers = 1;
  bool threaded = true;
  std::uint64_t transport_seed = 0;
  std::vector<ServerState> servers;
  std::map<int, int> host;  // element -> server id
  CostModel cost;
  std::vector<TraceEvent> trace;
  std::optional<int> fault_element;
  int next_rr = 0;

  ServerState& server(int id) { return servers[static_cast<std::size_t>(id - 1)]; }
};

MsNet::MsNet(int servers, int workers_per_server, bool threaded, std::uint64_t transport_seed)
    : impl_(std::make_unique<Impl>()) {
  if (servers < 1) throw DomainError("need at least one server");
  if (workers_per_server < 1) throw DomainError("need at least one worker per server");
  impl_->n_servers = servers;
  impl_->workers = workers_per_server;
  impl_->threaded = threaded;
  impl_->transport_seed = transport_seed;
  impl_->servers.resize(static_cast<std::size_t>(servers));
  for (int s = 0; s < servers; ++s) impl_->servers[static_cast<std::size_t>(s)].id = s + 1;
}

MsNet::~MsNet() = default;
MsNet::MsNet(MsNet&&) noexcept = default;
MsNet& MsNet::operator=(MsNet&&) noexcept = default;

int MsNet::server_count() const { return impl_->n_servers; }
int MsNet::workers_per_server() const { return impl_->workers; }

void MsNet::host(int element, Ruc cell) {
  if (impl_->host.count(element)) throw DomainError("element already hosted");
  const int srv = impl_->next_rr % impl_->n_servers + 1;
  ++impl_->next_rr;
  impl_->server(srv).cells.emplace(element, std::move(cell));
  impl_->host[element] = srv;
}

const Ruc& MsNet::hosted_cell(int element) const {
  const auto it = impl_->host.find(element);
  if (it == impl_->host.end()) throw DomainError("element not hosted");
  return impl_->server(it->second).cells.at(element);
}

Ruc& MsNet::hosted_cell_mut(int element) {
  return const_cast<Ruc&>(static_cast<const MsNet*>(this)->hosted_cell(element));
}

std::map<int, int> MsNet::host_map() const { return impl_->host; }

std::vector<ServerStatus> MsNet::status() const {
  std::vector<ServerStatus> out;
  for (const auto& s : impl_->servers) {
    ServerStatus st;
    st.id = s.id;
    st.workers = impl_->workers;
    for (const auto& [elem, cell] : s.cells) st.hosted.push_back(elem);
    st.busy_s = s.busy_s;
    out.push_back(std::move(st));
  }
  return out;
}

CostModel& MsNet::cost_model() { return impl_->cost; }

void MsNet::estimate_costs(std::vector<Job>& jobs) const {
  for (Job& j : jobs) {
    const auto it = impl_->host.find(j.element);
    const double omega =
        it == impl_->host.end() ? 0.0 : impl_->server(it->second).cells.at(j.element).mean_damage();
    j.cost_s = impl_->cost.estimate(j.model, omega);
  }
}

Schedule MsNet::plan(int step, const std::vector<Job>& jobs) const {
  return plan_schedule(step, jobs, impl_->n_servers, impl_->host);
}

void MsNet::inject_result_loss(int element) { impl_->fault_element = element; }

const std::vector<TraceEvent>& MsNet::trace() const { return impl_->trace; }
void MsNet::clear_trace() { impl_->trace.clear(); }

bool MsNet::single_host_invariant() const {
  std::set<int> seen;
  for (const auto& s : impl_->servers)
    for (const auto& [elem, cell] : s.cells) {
      if (!seen.insert(elem).second) return false;
      const auto it = impl_->host.find(elem);
      if (it == impl_->host.end() || it->second != s.id) return false;
    }
  return seen.size() == impl_->host.size();
}

std::vector<JobResult> MsNet::execute_step(const Schedule& schedule,
                                           const std::vector<Job>& jobs, const SolveFn& solve) {
  Impl& im = *impl_;
  if (schedule.job_server.size() != jobs.size())
    throw DomainError("schedule does not cover the job list");
  {
    std::set<int> elems;
    for (const Job& j : jobs)
      if (!elems.insert(j.element).second)
        throw DomainError("one job per cohesive element per step");
  }
  for (int srv : schedule.job_server)
    if (srv < 1 || srv > im.n_servers) throw DomainError("schedule names an unknown server");

  const int step = schedule.step;
  for (int srv = 1; srv <= im.n_servers; ++srv)
    im.trace.push_back({step, addr_master(), addr(srv, 0), "step_begin", -1, 0});

  // State handoffs: m same-rank worker transfers per migration, damage only.
  for (const Migration& mig : schedule.migrations) {
    auto& from = im.server(mig.from_server);
    const auto it = from.cells.find(mig.element);
    if (it == from.cells.end() || im.host[mig.element] != mig.from_server)
      throw DomainError("migration disagrees with the hosting map");
    const long long payload = 32LL * it->second.voxel_count();
    const long long per_msg = (payload + im.workers - 1) / im.workers;
    im.server(mig.to_server).cells.emplace(mig.element, std::move(it->second));
    from.cells.erase(it);
    im.host[mig.element] = mig.to_server;
    for (int r = 1; r <= im.workers; ++r)
      im.trace.push_back({step, addr(mig.from_server, r), addr(mig.to_server, r), "migrate",
                          mig.element, per_msg});
  }

  // Per-server job lists in job order; workers round-robin within a server.
  std::vector<std::vector<std::size_t>> per_server(static_cast<std::size_t>(im.n_servers));
  std::vector<int> worker_of(jobs.size(), 1);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const int srv = schedule.job_server[i];
    auto& list = per_server[static_cast<std::size_t>(srv - 1)];
    worker_of[i] = static_cast<int>(list.size() % static_cast<std::size_t>(im.workers)) + 1;
    list.push_back(i);
  }
  for (int srv = 1; srv <= im.n_servers; ++srv)
    for (std::size_t i : per_server[static_cast<std::size_t>(srv - 1)]) {
      im.trace.push_back(
          {step, addr_master(), addr(srv, 0), "dispatch", jobs[i].element, kJobWireBytes});
      im.trace.push_back({step, addr(srv, 0), addr(srv, worker_of[i]), "work", jobs[i].element,
                          kJobWireBytes});
    }

  std::vector<std::optional<MicroResult>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto run_job = [&](std::size_t i) {
    const int srv = schedule.job_server[i];
    Ruc& cell = im.server(srv).cells.at(jobs[i].element);
    try {
      results[i] = solve(jobs[i], cell);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (im.threaded) {
    std::vector<std::thread> pool;
    for (int srv = 1; srv <= im.n_servers; ++srv)
      for (int w = 1; w <= im.workers; ++w)
        pool.emplace_back([&, srv, w] {
          for (std::size_t i : per_server[static_cast<std::size_t>(srv - 1)]) {
            if (worker_of[i] != w) continue;
            run_job(i);
            if (errors[i]) break;
          }
        });
    for (std::thread& t : pool) t.join();
  } else {
    // Round-robin mailbox service; the transport seed permutes queue order
    // each round. Any order yields the same results since jobs touch
    // disjoint cells.
    std::vector<std::vector<std::size_t>> queues;
    for (int srv = 1; srv <= im.n_servers; ++srv)
      for (int w = 1; w <= im.workers; ++w) {
        std::vector<std::size_t> q;
        for (std::size_t i : per_server[static_cast<std::size_t>(srv - 1)])
          if (worker_of[i] == w) q.push_back(i);
        queues.push_back(std::move(q));
      }
    Rng rng(derive_stream(im.transport_seed, "transport") ^ static_cast<std::uint64_t>(step));
    std::vector<std::size_t> heads(queues.size(), 0);
    for (;;) {
      std::vector<std::size_t> live;
      for (std::size_t q = 0; q < queues.size(); ++q)
        if (heads[q] < queues[q].size()) live.push_back(q);
      if (live.empty()) break;
      for (std::size_t k = live.size(); k > 1; --k)
        std::swap(live[k - 1], live[rng.next_below(k)]);
      for (std::size_t q : live) {
        const std::size_t i = queues[q][heads[q]++];
        if (!errors[i]) run_job(i);
      }
    }
  }

  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (errors[i]) {
      COHESIM_LOG_ERROR("micro job for element %d failed; aborting step %d", jobs[i].element,
                        step);
      std::rethrow_exception(errors[i]);
    }

  bool lost = false;
  for (int srv = 1; srv <= im.n_servers; ++srv)
    for (std::size_t i : per_server[static_cast<std::size_t>(srv - 1)]) {
      im.trace.push_back({step, addr(srv, worker_of[i]), addr(srv, 0), "done", jobs[i].element,
                          kResultWireBytes});
      if (im.fault_element && *im.fault_element == jobs[i].element) {
        lost = true;
        continue;  // the result message never reaches the macro master
      }
      im.trace.push_back(
          {step, addr(srv, 0), addr_master(), "result", jobs[i].element, kResultWireBytes});
    }
  for (int srv = 1; srv <= im.n_servers; ++srv)
    im.trace.push_back({step, addr(srv, 0), addr_master(), "step_end", -1, 0});

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const MicroResult& r = *results[i];
    im.server(schedule.job_server[i]).busy_s += r.seconds;
    im.cost.record(jobs[i].model, r.omega_bar, r.seconds);
  }
  if (lost) {
    const int elem = *im.fault_element;
    im.fault_element.reset();
    throw DeadlineError("result message for element " + std::to_string(elem) +
                        " never arrived at the macro master");
  }

  std::vector<JobResult> out;
  out.reserve(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i)
    out.push_back({jobs[i].element, jobs[i].model, *results[i]});
  std::sort(out.begin(), out.end(),
            [](const JobResult& a, const JobResult& b) { return a.element < b.element; });
  return out;
}

}  // namespace cohesim
