#include "half/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "half/analysis_worker.hpp"
#include "half/recorder.hpp"
#include "half/sync_state.hpp"
#include "half/vm.hpp"

namespace half {

std::string_view to_string(Scheme s) { return s == Scheme::Mirror ? "mirror" : "prealloc"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "mirror") return Scheme::Mirror;
  if (s == "prealloc") return Scheme::Prealloc;
  throw std::invalid_argument("unknown scheme '" + s + "' (mirror|prealloc)");
}

void validate(const ExperimentConfig& cfg) {
  ChannelConfig cc{cfg.buffers_per_thread, cfg.buffer_entries, cfg.guard, cfg.record_only};
  validate(cc);
  if (cfg.scheme == Scheme::Prealloc && cfg.prealloc_base == 0)
    throw std::invalid_argument("scheme=prealloc needs a reservation base");
  if (cfg.record_only && cfg.oracle) throw std::invalid_argument("--record-only and --oracle are exclusive");
  if (cfg.high_water_pages == 0) throw std::invalid_argument("high-water mark must be positive");
}

namespace {

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Ok: return "ok";
    case RunStatus::Fault: return "fault";
    case RunStatus::Interrupted: return "interrupted";
    case RunStatus::StepLimit: return "step-limit";
  }
  return "?";
}

bool contains(const std::vector<std::uint8_t>& hay, const std::string& needle) {
  if (needle.empty()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

MetricsReport base_report(const Workload& w, const ExperimentConfig& cfg) {
  MetricsReport r;
  r.workload = w.id;
  r.scheme = std::string(to_string(cfg.scheme));
  r.seed = cfg.seed;
  r.buffer_entries = cfg.buffer_entries;
  r.buffers_per_thread = cfg.buffers_per_thread;
  r.sync_submit = cfg.sync_submit;
  r.deterministic = cfg.deterministic;
  r.throttle = cfg.throttle;
  return r;
}

void fill_outcome(MetricsReport& r, const RunOutcome& o) {
  r.status = status_name(o.status);
  if (o.status == RunStatus::Fault) {
    r.fault = std::string(to_string(o.fault));
    r.message = o.message + " (tid " + std::to_string(o.tid) + ", pc " + hex(o.pc) + ")";
  } else if (o.status == RunStatus::StepLimit) {
    r.message = o.message;
  }
  r.steps = o.steps;
}

// Sets up the world exactly as both the decoupled run and the oracle see it.
// Returns the prealloc reservation, if any.
std::optional<Region> setup_world(World& world, const Workload& w, const ExperimentConfig& cfg) {
  world.net_in = w.setup.net_in;
  world.file_in = w.setup.file_in;
  world.load(w.program);
  if (cfg.scheme == Scheme::Prealloc) return prealloc_reserve(world, cfg.prealloc_base);
  return std::nullopt;
}

// Single-threaded analysis scheduling: submitted buffers are queued in
// global submission order and processed at seeded points between quanta,
// when a producer runs out of buffers, and at the end.
class DeterministicDriver {
 public:
  DeterministicDriver(std::uint64_t seed, std::atomic<bool>& stop) : rng_(seed ^ 0x9E3779B97F4A7C15ULL), stop_(stop) {}

  void add(ThreadId tid, RecordChannel& ch, AnalysisWorker& w) {
    if (lanes_.size() <= tid) lanes_.resize(tid + 1);
    lanes_[tid] = Lane{&ch, &w, false};
  }
  void submitted(ThreadId tid, std::uint64_t gen) { fifo_.emplace_back(tid, gen); }

  void quantum_end() {
    const std::size_t k = rng_() % (fifo_.size() + 1);
    for (std::size_t i = 0; i < k && !fifo_.empty(); ++i) process_front();
  }

  void starve(ThreadId tid) {
    auto& ch = *lanes_.at(tid).channel;
    const std::uint64_t before = ch.finished_generations();
    while (!fifo_.empty() && ch.finished_generations() == before) process_front();
  }

  void drain() {
    while (!fifo_.empty()) process_front();
  }

  const std::string& fault() const { return fault_; }

 private:
  struct Lane {
    RecordChannel* channel = nullptr;
    AnalysisWorker* worker = nullptr;
    bool dead = false;
  };

  void process_front() {
    const auto [tid, gen] = fifo_.front();
    fifo_.pop_front();
    auto& lane = lanes_.at(tid);
    if (lane.channel->finished_generations() > gen) return;
    if (!lane.dead) {
      try {
        lane.worker->pump(gen);
        return;
      } catch (const WorkerFault& e) {
        if (fault_.empty()) fault_ = e.what();
        lane.dead = true;
        stop_ = true;
      }
    }
    while (lane.channel->finished_generations() <= gen) {
      auto ev = lane.channel->try_next();
      if (!ev || ev->kind == EventKind::EndOfStream) break;
    }
  }

  std::mt19937_64 rng_;
  std::atomic<bool>& stop_;
  std::vector<Lane> lanes_;
  std::deque<std::pair<ThreadId, std::uint64_t>> fifo_;
  std::string fault_;
};

}  // namespace

int exit_code_for(const MetricsReport& r, bool halt_on_alert) {
  if (r.fault == "AddressConflict") return 3;
  if (r.status == "fault" || r.status == "worker-fault" || r.status == "step-limit") return 1;
  if (halt_on_alert && r.alerts > 0) return 2;
  return 0;
}

ExperimentResult run_experiment(const Workload& w, const ExperimentConfig& cfg) {
  validate(cfg);
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  ExperimentResult res;
  World world(w.setup.world);
  Instrumenter code(w.program, w.bindings);
  ShadowConfig scfg;
  scfg.high_water_pages = cfg.high_water_pages;
  scfg.spill_path = cfg.spill_file;
  ShadowMemory shadow(scfg);
  SyncState sync(cfg.sync_submit);
  TaskDispatcher tasks;
  std::atomic<bool> stop{false};
  if (cfg.halt_on_alert) tasks.alerts.set_listener([&](const Alert&) { stop = true; });

  const ChannelConfig ccfg{cfg.buffers_per_thread, cfg.buffer_entries, cfg.guard, cfg.record_only};
  std::vector<std::unique_ptr<AnalysisWorker>> workers;
  std::vector<std::thread> threads;
  std::mutex fault_mu;
  std::string worker_fault;
  DeterministicDriver driver(cfg.seed, stop);

  RecorderCallbacks cb;
  cb.should_stop = [&] { return stop.load(); };
  if (!cfg.record_only) {
    cb.thread_started = [&](ThreadId tid, RecordChannel& ch) {
      workers.push_back(std::make_unique<AnalysisWorker>(tid, ch, code, shadow, tasks));
      AnalysisWorker* worker = workers.back().get();
      ch.set_begin_listener([&sync, tid](std::uint64_t gen) { sync.on_begin(tid, gen); });
      if (cfg.deterministic) {
        driver.add(tid, ch, *worker);
        ch.set_submit_listener([&driver, tid](const SubmitInfo& s) { driver.submitted(tid, s.generation); });
        ch.set_starvation_handler([&driver, tid] { driver.starve(tid); });
        return;
      }
      threads.emplace_back([&, worker, &ch = ch] {
        try {
          worker->run();
        } catch (const WorkerFault& e) {
          {
            std::lock_guard lk(fault_mu);
            if (worker_fault.empty()) worker_fault = e.what();
          }
          stop = true;
          // Keep draining so the producer never blocks on a dead consumer.
          while (ch.next().kind != EventKind::EndOfStream) {
          }
        }
      });
    };
    if (cfg.deterministic) cb.quantum_end = [&] { driver.quantum_end(); };
  }
  Recorder recorder(code, shadow, sync, ccfg, cb);

  RunOutcome outcome;
  std::exception_ptr escaped;
  auto target_start = Clock::now();
  try {
    if (auto reserved = setup_world(world, w, cfg)) shadow.reserved_in_target = *reserved;
    VmConfig vc;
    vc.seed = cfg.seed;
    vc.throttle = cfg.throttle;
    Vm vm(w.program, world, recorder, vc);
    target_start = Clock::now();
    outcome = vm.run();
  } catch (const VmFault& f) {
    outcome.status = RunStatus::Fault;
    outcome.fault = f.kind();
    outcome.message = f.what();
  } catch (...) {
    escaped = std::current_exception();
  }
  const auto target_end = Clock::now();
  for (ThreadId t = 0; t < recorder.thread_count(); ++t) recorder.channel(t).close(true);
  if (cfg.deterministic && !cfg.record_only) driver.drain();
  for (auto& th : threads) th.join();
  const auto t1 = Clock::now();
  if (escaped) std::rethrow_exception(escaped);

  MetricsReport& r = res.report;
  r = base_report(w, cfg);
  r.mode = cfg.record_only ? "record-only" : "decoupled";
  fill_outcome(r, outcome);
  if (!driver.fault().empty()) worker_fault = driver.fault();
  if (!worker_fault.empty()) {
    r.status = "worker-fault";
    r.message = worker_fault;
  }
  r.pi = code.pi();
  r.am_bytes = code.am_bytes();
  r.tf = world.memory.first_touches();
  r.tc = world.committed_pages_total();
  r.cf = shadow.fault_count();
  r.rb = tasks.counters.rb.load();
  r.cb = tasks.counters.cb.load();
  r.db = tasks.counters.db.load();
  const auto sc = sync.counters();
  r.wsn = sc.wsn;
  r.ssn = sc.ssn;
  r.cfn = sc.cfn;
  r.dfn = sc.dfn;
  r.gsr = compute_gsr(sc.cfn, sc.dfn);
  r.blocks = code.block_count();
  r.instructions = code.total_instructions();
  r.instructions_instrumented = code.instrumented_instructions();
  r.threads = recorder.thread_count();
  std::uint64_t submissions_total = 0;
  for (ThreadId t = 0; t < recorder.thread_count(); ++t) {
    auto& ch = recorder.channel(t);
    r.bf += ch.bf();
    r.record_words += ch.words_written();
    for (std::size_t k = 0; k < kSubmitReasons; ++k) r.submissions[k] += ch.submissions(SubmitReason(k));
    submissions_total += ch.submissions_total();
  }
  for (const auto& wk : workers) r.blocks_executed += wk->counters().blocks_executed;
  r.logical_time = r.steps + r.record_words + kSwitchCost * submissions_total;
  r.shadow_committed_pages = shadow.committed_pages();
  r.shadow_peak_pages = shadow.peak_committed_pages();
  r.shadow_committed_bytes = r.shadow_committed_pages * kPageSize;
  r.shadow_reserved_bytes = shadow.reserved_in_target ? shadow.reserved_in_target->size : 0;
  r.shadow_spilled_pages = shadow.spilled_pages();
  r.shadow_reloads = shadow.reloads();

  TaintGroundTruth& obs = res.observed;
  obs.outcome = outcome;
  obs.shadow = shadow.flat();
  obs.regs.resize(recorder.thread_count());
  for (std::size_t i = 0; i < workers.size(); ++i) obs.regs[workers[i]->tid()] = workers[i]->regs;
  obs.rb = r.rb;
  obs.cb = r.cb;
  obs.db = r.db;
  obs.alerts = tasks.alerts.snapshot();
  std::sort(obs.alerts.begin(), obs.alerts.end());

  r.alerts = obs.alerts.size();
  r.payload_executed = contains(world.file_out, w.payload_marker);
  r.shadow_digest = taint_digest(obs.shadow);
  r.register_digest = taint_digest(obs.regs);
  if (!cfg.deterministic) {
    r.target_wall_ms = std::chrono::duration<double, std::milli>(target_end - target_start).count();
    r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  r.exit_code = exit_code_for(r, cfg.halt_on_alert);
  res.file_out = world.file_out;
  res.net_out = world.net_out;
  if (cfg.dump_analysis_code) res.analysis_dump = code.dump();

  if (cfg.oracle) {
    auto orc = run_oracle(w, cfg);
    Diff d = compare(orc.truth, obs);
    res.oracle_diff = d;
    res.report = orc.report;
    if (d) {
      res.report.message = "oracle mismatch (" + std::to_string(d.count) + " differences): " + d.first;
      res.report.exit_code = 4;
    }
  }
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(make_workload(cfg.workload), cfg); }

OracleRun run_oracle(const Workload& w, const ExperimentConfig& cfg) {
  World world(w.setup.world);
  CoupledHooks hooks(w.program, w.bindings);
  std::atomic<bool> stop{false};
  RunOutcome outcome;
  Addr reserved = 0;
  try {
    if (auto region = setup_world(world, w, cfg)) reserved = region->size;
    VmConfig vc;
    vc.seed = cfg.seed;
    vc.throttle = cfg.throttle;
    Vm vm(w.program, world, hooks, vc);
    outcome = vm.run();
  } catch (const VmFault& f) {
    outcome.status = RunStatus::Fault;
    outcome.fault = f.kind();
    outcome.message = f.what();
  }
  OracleRun o;
  o.truth = hooks.truth(outcome);
  MetricsReport& r = o.report;
  r = base_report(w, cfg);
  r.mode = "oracle";
  fill_outcome(r, outcome);
  r.pi = hooks.code.pi();
  r.am_bytes = hooks.code.am_bytes();
  r.tf = world.memory.first_touches();
  r.tc = world.committed_pages_total();
  r.rb = o.truth.rb;
  r.cb = o.truth.cb;
  r.db = o.truth.db;
  r.blocks = hooks.code.block_count();
  r.instructions = hooks.code.total_instructions();
  r.instructions_instrumented = hooks.code.instrumented_instructions();
  r.threads = o.truth.regs.size();
  r.logical_time = r.steps;
  r.shadow_reserved_bytes = reserved;
  r.alerts = o.truth.alerts.size();
  r.payload_executed = contains(world.file_out, w.payload_marker);
  r.shadow_digest = taint_digest(o.truth.shadow);
  r.register_digest = taint_digest(o.truth.regs);
  r.exit_code = exit_code_for(r, cfg.halt_on_alert);
  return o;
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "buffer-entries") return SweepAxis::BufferEntries;
  if (s == "scheme") return SweepAxis::Scheme;
  if (s == "sync-submit") return SweepAxis::SyncSubmit;
  if (s == "throttle") return SweepAxis::Throttle;
  throw std::invalid_argument("unknown sweep axis '" + s + "' (buffer-entries|scheme|sync-submit|throttle)");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::BufferEntries: return "buffer-entries";
    case SweepAxis::Scheme: return "scheme";
    case SweepAxis::SyncSubmit: return "sync-submit";
    case SweepAxis::Throttle: return "throttle";
  }
  return "?";
}

namespace {

std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 0);
  if (pos != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

bool parse_onoff(const std::string& s) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw std::invalid_argument("expected on|off, got '" + s + "'");
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
  const Workload w = make_workload(base.workload);
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    cfg.report_path.clear();
    switch (axis) {
      case SweepAxis::BufferEntries: cfg.buffer_entries = parse_u64(v); break;
      case SweepAxis::Scheme: cfg.scheme = parse_scheme(v); break;
      case SweepAxis::SyncSubmit: cfg.sync_submit = parse_onoff(v); break;
      case SweepAxis::Throttle: cfg.throttle = parse_u64(v); break;
    }
    rows.push_back(SweepRow{v, run_experiment(w, cfg).report});
  }
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << to_string(axis)
     << ",status,exit_code,wall_ms,logical_time,bf,cf,gsr,cfn,dfn,submissions,shadow_committed_bytes,"
        "shadow_reserved_bytes,payload_executed\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::uint64_t subs = 0;
    for (auto s : r.submissions) subs += s;
    os << row.value << ',' << r.status << ',' << r.exit_code << ',';
    if (r.wall_ms) os << *r.wall_ms;
    os << ',' << r.logical_time << ',' << r.bf << ',' << r.cf << ',' << r.gsr << ',' << r.cfn << ',' << r.dfn << ','
       << subs << ',' << r.shadow_committed_bytes << ',' << r.shadow_reserved_bytes << ','
       << (r.payload_executed ? "true" : "false") << '\n';
  }
  return os.str();
}

nlohmann::ordered_json sweep_json(SweepAxis axis, const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json j;
  j["axis"] = std::string(to_string(axis));
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) j["rows"].push_back({{"value", row.value}, {"report", to_json(row.report)}});
  return j;
}

ReportDiff diff_reports(const nlohmann::json& a, const nlohmann::json& b) {
  static const std::vector<std::string> skip = {"/schema", "/mode", "/wall_ms", "/target_wall_ms", "/message"};
  static const std::vector<std::string> taint = {"/rb", "/cb", "/db", "/alerts", "/digests/shadow",
                                                 "/digests/registers"};
  ReportDiff d;
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  auto skipped = [&](const std::string& k) {
    return std::find(skip.begin(), skip.end(), k) != skip.end() || k.rfind("/config/", 0) == 0;
  };
  for (const auto& [k, va] : fa.items()) {
    if (skipped(k)) continue;
    if (!fb.contains(k)) d.lines.push_back(k + ": " + va.dump() + " vs (missing)");
    else if (fb.at(k) != va) d.lines.push_back(k + ": " + va.dump() + " vs " + fb.at(k).dump());
  }
  for (const auto& [k, vb] : fb.items())
    if (!skipped(k) && !fa.contains(k)) d.lines.push_back(k + ": (missing) vs " + vb.dump());
  for (const auto& k : taint)
    if (!fa.contains(k) || !fb.contains(k) || fa.at(k) != fb.at(k)) d.taint_equal = false;
  return d;
}

}  // namespace half
