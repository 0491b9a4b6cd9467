// Acceptance suite: one PASS/FAIL line per criterion; exits 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "../tests/properties.hpp"
#include "half/oracle.hpp"
#include "half/runner.hpp"
#include "half/sync_state.hpp"
#include "half/workloads.hpp"

using namespace half;

namespace {

// Tolerances and sizes.
constexpr std::size_t kEquivalenceSeeds = 1000;
constexpr double kEquivalenceBudgetS = 120.0;
constexpr double kGsrTolerance = 1e-12;
constexpr int kWallRepeats = 15;
constexpr double kConflictBudgetS = 1.0;
constexpr std::uint64_t kSparsePages = 100;
constexpr std::size_t kChannelCases = 10000;
constexpr std::size_t kShadowCases = 100;
constexpr std::size_t kShadowOps = 10000;

int failed = 0;

void line(const char* id, bool pass, const std::string& detail) {
  std::printf("%-4s %s  %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  failed += !pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig det(const std::string& id) {
  ExperimentConfig cfg;
  cfg.workload = id;
  cfg.deterministic = true;
  return cfg;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t runs = 0, mismatches = 0, limit_violations = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= kEquivalenceSeeds; ++seed) {
    const Workload w = generate_random_workload(seed);
    std::size_t sources = 0, sinks = 0;
    for (const auto& in : w.program.instructions) {
      if (in.op != Opcode::SYSCALL) continue;
      sources += in.sys == SyscallKind::RECV || in.sys == SyscallKind::FREAD;
      sinks += in.sys == SyscallKind::SEND || in.sys == SyscallKind::FWRITE;
    }
    for (const auto& [pc, spec] : w.bindings.sites) sinks += spec.kind == TaskKind::TaintCheck;
    if (w.program.size() > 500 || w.threads > 4 || sources > 3 || sinks > 3) ++limit_violations;

    ExperimentConfig cfg = det(w.id);
    cfg.seed = seed;
    const auto truth = run_oracle(w, cfg).truth;
    for (std::size_t cap : {16, 256, 65536}) {
      cfg.buffer_entries = cap;
      const auto res = run_experiment(w, cfg);
      ++runs;
      const auto d = compare(truth, res.observed);
      if (d || res.report.status != "ok") {
        if (mismatches++ == 0)
          first = w.id + " cap " + std::to_string(cap) + ": " + (d ? d.first : res.report.status);
      }
    }
  }
  const double s = seconds_since(t0);
  line("C1", mismatches == 0 && limit_violations == 0 && s <= kEquivalenceBudgetS,
       fmt("oracle equivalence: %zu runs, %zu mismatches, %zu limit violations, %.1f s (budget %.0f s)%s%s", runs,
           mismatches, limit_violations, s, kEquivalenceBudgetS, first.empty() ? "" : "; first: ", first.c_str()));
}

void criterion2() {
  const double g = compute_gsr(1076, 5);
  const bool formula = std::abs(g - 1071.0 / 1076.0) < kGsrTolerance && std::round(g * 1000) / 10 == 99.5;
  const auto pc = run_experiment(det("producer-consumer")).report;
  auto adv_cfg = det("adversarial");
  adv_cfg.sync_submit = false;
  adv_cfg.seed = 1;
  const auto adv = run_experiment(adv_cfg).report;
  line("C2", formula && pc.gsr == 1.0 && adv.gsr < 1.0,
       fmt("GSR(1076,5)=%.5f (%.1f%%); producer-consumer GSR=%.3f (CFN=%llu); adversarial seed 1 sync off GSR=%.3f "
           "(CFN=%llu DFN=%llu)",
           g, std::round(g * 1000) / 10, pc.gsr, (unsigned long long)pc.cfn, adv.gsr, (unsigned long long)adv.cfn,
           (unsigned long long)adv.dfn));
}

void criterion3() {
  auto small_cfg = det("membound");
  small_cfg.buffer_entries = 1024;
  auto big_cfg = det("membound");
  big_cfg.buffer_entries = 65536;
  const auto small = run_experiment(small_cfg).report;
  const auto big = run_experiment(big_cfg).report;
  auto switches = [](const MetricsReport& r) {
    std::uint64_t n = 0;
    for (auto s : r.submissions) n += s;
    return n;
  };

  // Wall time in threaded mode, best of N, interleaved.
  small_cfg.deterministic = big_cfg.deterministic = false;
  double best_small = 1e300, best_big = 1e300;
  for (int i = 0; i < kWallRepeats; ++i) {
    best_small = std::min(best_small, *run_experiment(small_cfg).report.wall_ms);
    best_big = std::min(best_big, *run_experiment(big_cfg).report.wall_ms);
  }

  // Closed form with guard 1 on the single membound channel.
  auto closed = [](const MetricsReport& r, std::uint64_t cap) {
    const std::uint64_t u = cap - 1;
    return (r.record_words + u - 1) / u;
  };
  auto full_only = [](const MetricsReport& r, std::uint64_t cap) { return (r.record_words - 1) / (cap - 1); };
  const bool trend = switches(small) > switches(big) && small.logical_time > big.logical_time && best_small > best_big;
  const bool literal = small.bf == closed(small, 1024) && big.bf == closed(big, 65536);
  line("C3", trend && literal,
       fmt("switches 1024:%llu > 65536:%llu; logical time %llu > %llu; best wall %.2f ms > %.2f ms; BF 1024:%llu vs ceil(n/u)=%llu, "
           "65536:%llu vs ceil(n/u)=%llu (n=%llu)",
           (unsigned long long)switches(small), (unsigned long long)switches(big), (unsigned long long)small.logical_time,
           (unsigned long long)big.logical_time, best_small, best_big,
           (unsigned long long)small.bf, (unsigned long long)closed(small, 1024), (unsigned long long)big.bf,
           (unsigned long long)closed(big, 65536), (unsigned long long)small.record_words));
  line("C3b", small.bf == full_only(small, 1024) && big.bf == full_only(big, 65536) && small.bf > big.bf,
       fmt("BF equals Full submissions floor((n-1)/u): 1024:%llu 65536:%llu", (unsigned long long)full_only(small, 1024),
           (unsigned long long)full_only(big, 65536)));
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = det("heap-spray");
  const auto mirror = run_experiment(cfg).report;
  const double s_mirror = seconds_since(t0);
  cfg.scheme = Scheme::Prealloc;
  const auto t1 = std::chrono::steady_clock::now();
  const auto pre = run_experiment(cfg).report;
  const double s_pre = seconds_since(t1);
  const bool overlaps = kSprayFixedAddr >= cfg.prealloc_base && kSprayFixedAddr < cfg.prealloc_base + pre.shadow_reserved_bytes;
  line("C4",
       mirror.status == "ok" && mirror.payload_executed && pre.fault == "AddressConflict" && pre.exit_code == 3 &&
           !pre.payload_executed && overlaps && s_mirror < kConflictBudgetS && s_pre < kConflictBudgetS,
       fmt("mirror: %s payload=%d (%.3f s); prealloc: %s exit %d payload=%d (%.3f s); spray 0x%llx inside reservation=%d",
           mirror.status.c_str(), mirror.payload_executed, s_mirror, pre.fault.c_str(), pre.exit_code,
           pre.payload_executed, s_pre, (unsigned long long)kSprayFixedAddr, overlaps));
}

void criterion5() {
  auto cfg = det("sparse");
  const Workload w = make_workload("sparse");
  const auto mirror = run_experiment(w, cfg).report;
  cfg.scheme = Scheme::Prealloc;
  const auto pre = run_experiment(w, cfg).report;
  const std::uint64_t span = w.setup.world.span;
  const double ratio = double(pre.shadow_reserved_bytes) / double(std::max<std::uint64_t>(1, mirror.shadow_committed_bytes));
  line("C5",
       span == (1ull << 30) && mirror.shadow_committed_bytes <= kSparsePages * kPageSize * 2 &&
           mirror.shadow_reserved_bytes == 0 && pre.shadow_reserved_bytes == span / 8 && ratio > 100.0,
       fmt("mirror committed %llu B (limit %llu); prealloc reserved %llu B (span/8 = %llu); ratio %.0fx",
           (unsigned long long)mirror.shadow_committed_bytes, (unsigned long long)(kSparsePages * kPageSize * 2),
           (unsigned long long)pre.shadow_reserved_bytes, (unsigned long long)(span / 8), ratio));
}

void criterion6() {
  const auto r = props::channel_property(kChannelCases, 0xC4A1);
  line("C6", r.cases >= kChannelCases && r.failures == 0,
       fmt("channel property suite: %zu cases, %zu failures%s%s", r.cases, r.failures, r.first.empty() ? "" : "; ",
           r.first.c_str()));
}

void criterion7() {
  const auto r = props::shadow_property(kShadowCases, kShadowOps, 0x5AD0);
  line("C7", r.cases >= kShadowCases && r.failures == 0,
       fmt("shadow identity: %zu cases x %zu ops, %zu failures%s%s", r.cases, kShadowOps, r.failures,
           r.first.empty() ? "" : "; ", r.first.c_str()));
}

void criterion8() {
  const Workload w = make_workload("beacon");
  std::uint64_t received = 0;
  for (const auto& s : w.setup.net_in) received += s.size();
  for (const auto& s : w.setup.file_in) received += s.size();
  const Addr stage2 = w.program.label("stage2");

  auto cfg = det("beacon");
  const auto full = run_experiment(w, cfg);
  const auto truth = run_oracle(w, cfg).truth;
  cfg.halt_on_alert = true;
  cfg.buffer_entries = 1024;
  const auto halted = run_experiment(w, cfg);

  bool indirect = false;
  for (const auto& a : halted.observed.alerts)
    indirect |= a.kind == AlertKind::TaintedIndirectTarget && a.address == stage2;
  // The target stops inside stage2, so stage2's analysis never completes.
  const bool early = halted.report.status == "interrupted" &&
                     halted.report.blocks_executed < full.report.blocks_executed;
  const auto& r = halted.report;
  line("C8",
       indirect && early && r.exit_code == 2 && r.rb == received && r.cb == truth.cb && r.db == truth.db &&
           full.report.cb == truth.cb,
       fmt("TaintedIndirectTarget -> 0x%llx: %d; halted %s after %llu of %llu blocks analysed; exit %d; RB=%llu "
           "(received %llu); CB/DB=%llu/%llu (oracle %llu/%llu)",
           (unsigned long long)stage2, indirect, r.status.c_str(), (unsigned long long)r.blocks_executed,
           (unsigned long long)full.report.blocks_executed, r.exit_code, (unsigned long long)r.rb,
           (unsigned long long)received, (unsigned long long)r.cb, (unsigned long long)r.db,
           (unsigned long long)truth.cb, (unsigned long long)truth.db));
}

void criterion9() {
  const auto dl = run_experiment(det("downloader")).report;
  const Workload mix = make_workload("downloader-mix");
  const auto cfg = det("downloader-mix");
  const auto res = run_experiment(mix, cfg);
  const auto truth = run_oracle(mix, cfg).truth;
  line("C9",
       dl.rb == 10240 && dl.cb == 10240 && dl.db == 10240 && res.report.db == truth.db &&
           compare(truth, res.observed).empty,
       fmt("downloader RB/CB/DB=%llu/%llu/%llu; mix DB=%llu (oracle %llu)", (unsigned long long)dl.rb,
           (unsigned long long)dl.cb, (unsigned long long)dl.db, (unsigned long long)res.report.db,
           (unsigned long long)truth.db));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  std::printf("%d failed\n", failed);
  return failed ? 1 : 0;
}
