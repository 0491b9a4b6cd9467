#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "half/analysis_worker.hpp"
#include "half/assembler.hpp"
#include "half/oracle.hpp"
#include "half/runner.hpp"
#include "half/workloads.hpp"

using namespace half;

namespace {

struct Rig {
  FlatTaint mem;
  RegisterTaint regs;
  TaskDispatcher tasks;
  TaintContext ctx{mem, regs, tasks, 0, kCodeBase};

  std::vector<TaintLabel> read(Addr a, std::size_t n) {
    std::vector<TaintLabel> out(n);
    mem.read(a, out);
    return out;
  }
  void set(Addr a, std::vector<TaintLabel> ls) { mem.write(a, ls); }
};

TaintOp op_of(TaintOpKind k, std::uint8_t dst = 0, std::uint8_t src = 0, std::uint32_t entry = 0,
              std::uint8_t entries = 0) {
  TaintOp op;
  op.kind = k;
  op.dst = dst;
  op.src = src;
  op.entry = entry;
  op.entries = entries;
  return op;
}

}  // namespace

TEST_CASE("apply_taint_op") {
  Rig r;
  SUBCASE("Union merges bytewise") {
    r.regs.regs[1] = {2, 0, 0, 0, 0, 0, 0, 4};
    r.regs.regs[2] = {1, 0, 0, 0, 0, 0, 0, 0};
    const Word e[] = {0};
    apply_taint_op(op_of(TaintOpKind::Union, 1, 2), e, r.ctx);
    CHECK(r.regs.regs[1] == std::array<TaintLabel, 8>{3, 0, 0, 0, 0, 0, 0, 4});
  }
  SUBCASE("BlockCopy") {
    r.set(0x5000, {1, 1, 0, 0});
    r.set(0x6000, {8, 8, 8, 8, 8});
    const Word e[] = {0, 0x5000, 0x6000, 4};
    apply_taint_op(op_of(TaintOpKind::BlockCopy, 0, 0, 1, 3), e, r.ctx);
    CHECK(r.read(0x6000, 5) == std::vector<TaintLabel>{1, 1, 0, 0, 8});
  }
  SUBCASE("BlockCopy with overlap copies forward") {
    r.set(0x5000, {1, 2, 3, 4});
    const Word e[] = {0, 0x5000, 0x5001, 4};
    apply_taint_op(op_of(TaintOpKind::BlockCopy, 0, 0, 1, 3), e, r.ctx);
    CHECK(r.read(0x5000, 5) == std::vector<TaintLabel>{1, 1, 1, 1, 1});
  }
  SUBCASE("CondCopy") {
    r.regs.regs[2].fill(5);
    const Word not_taken[] = {0, 0};
    apply_taint_op(op_of(TaintOpKind::CondCopy, 1, 2, 1, 1), not_taken, r.ctx);
    CHECK_FALSE(r.regs.any(1));
    const Word taken[] = {0, 1};
    apply_taint_op(op_of(TaintOpKind::CondCopy, 1, 2, 1, 1), taken, r.ctx);
    CHECK(r.regs.regs[1] == r.regs.regs[2]);
  }
  SUBCASE("CopyMem2Reg and CopyReg2Mem honour width") {
    r.set(0x7000, {1, 2, 3, 4, 5, 6, 7, 8});
    r.regs.regs[3].fill(9);
    auto ld = op_of(TaintOpKind::CopyMem2Reg, 3, 0, 1, 1);
    ld.width = 2;
    const Word e[] = {0, 0x7000};
    apply_taint_op(ld, e, r.ctx);
    CHECK(r.regs.regs[3] == std::array<TaintLabel, 8>{1, 2, 0, 0, 0, 0, 0, 0});
    auto st = op_of(TaintOpKind::CopyReg2Mem, 0, 3, 1, 1);
    st.width = 4;
    const Word e2[] = {0, 0x7100};
    apply_taint_op(st, e2, r.ctx);
    CHECK(r.read(0x7100, 5) == std::vector<TaintLabel>{1, 2, 0, 0, 0});
  }
  SUBCASE("Clear over a memory range") {
    r.set(0x8000, {1, 1, 1, 1});
    auto c = op_of(TaintOpKind::Clear, 0, 0, 1, 4);
    c.mem_range = true;
    const Word e[] = {0, encode_task_tag({}), 0x8001, 2, 0};
    apply_taint_op(c, e, r.ctx);
    CHECK(r.read(0x8000, 4) == std::vector<TaintLabel>{1, 0, 0, 1});
  }
}

TEST_CASE("dispatch_task") {
  Rig r;
  SUBCASE("source then check") {
    r.tasks.dispatch(TaskInvocation{TaskKind::TaintSource, 0, 0x5000, 64, 1}, r.ctx);
    auto a = r.tasks.dispatch(TaskInvocation{TaskKind::TaintCheck, 0, 0x5000, 64}, r.ctx);
    CHECK(r.tasks.counters.rb == 64);
    CHECK(r.tasks.counters.cb == 64);
    CHECK(r.tasks.counters.db == 64);
    REQUIRE(a.has_value());
    CHECK(a->kind == AlertKind::SinkHit);
    CHECK(a->labels == 1);
    CHECK(r.tasks.alerts.size() == 1);
  }
  SUBCASE("check over untainted range") {
    auto a = r.tasks.dispatch(TaskInvocation{TaskKind::TaintCheck, 0, 0x5000, 64}, r.ctx);
    CHECK_FALSE(a.has_value());
    CHECK(r.tasks.counters.cb == 64);
    CHECK(r.tasks.counters.db == 0);
  }
  SUBCASE("partial taint counts tainted bytes only") {
    r.set(0x5002, {4, 0, 2});
    r.tasks.dispatch(TaskInvocation{TaskKind::TaintCheck, 0, 0x5000, 8}, r.ctx);
    CHECK(r.tasks.counters.db == 2);
    CHECK(r.tasks.counters.db <= r.tasks.counters.cb);
  }
  SUBCASE("indirect target check") {
    TaskInvocation inv{TaskKind::IndirectCheck};
    inv.reg = 4;
    inv.target = 0x12340;
    CHECK_FALSE(r.tasks.dispatch(inv, r.ctx).has_value());
    r.regs.regs[4][7] = 2;
    auto a = r.tasks.dispatch(inv, r.ctx);
    REQUIRE(a.has_value());
    CHECK(a->kind == AlertKind::TaintedIndirectTarget);
    CHECK(a->address == 0x12340);
  }
  SUBCASE("custom handlers") {
    TaskInvocation inv{TaskKind::Custom, 7, 0x100, 4};
    CHECK_THROWS_AS(r.tasks.dispatch(inv, r.ctx), std::runtime_error);
    int hits = 0;
    r.tasks.register_custom(7, [&](const TaskInvocation& i, TaintContext&) -> std::optional<Alert> {
      ++hits;
      CHECK(i.addr == 0x100);
      return std::nullopt;
    });
    r.tasks.dispatch(inv, r.ctx);
    CHECK(hits == 1);
  }
  SUBCASE("alert json line") {
    Alert a{AlertKind::SinkHit, 1, 0x100000, 0x5000, 4, 1};
    const auto line = alert_to_json_line(a);
    CHECK(line.find('\n') == std::string::npos);
    const auto j = nlohmann::json::parse(line);
    CHECK(j["kind"] == "SinkHit");
  }
}

TEST_CASE("run_worker") {
  Program p = assemble("MOVRI r1, 5\nHALT");
  Instrumenter code(p, {});
  FlatTaint mem;
  TaskDispatcher tasks;
  ChannelConfig cc;
  cc.capacity = 8;

  SUBCASE("single block clears r1") {
    RecordChannel ch(cc);
    AnalysisWorker w(0, ch, code, mem, tasks);
    w.regs.regs[1].fill(1);
    ch.write(code.block_at(kCodeBase).analysis.address);
    ch.close(false);
    w.run();
    CHECK(w.finished());
    CHECK(w.counters().blocks_executed == 1);
    CHECK(w.counters().data_consumed == 0);
    CHECK_FALSE(w.regs.any(1));
  }
  SUBCASE("unknown header names the address") {
    RecordChannel ch(cc);
    AnalysisWorker w(3, ch, code, mem, tasks);
    ch.write(0xBAD0);
    ch.close(false);
    try {
      w.run();
      FAIL("expected a worker fault");
    } catch (const WorkerFault& f) {
      CHECK(std::string(f.what()).find("0xbad0") != std::string::npos);
    }
  }
  SUBCASE("underrun") {
    Program q = assemble("LOAD r1, [r2]\nHALT");
    Instrumenter qc(q, {});
    RecordChannel ch(cc);
    AnalysisWorker w(0, ch, qc, mem, tasks);
    ch.write(qc.block_at(kCodeBase).analysis.address);
    ch.close(false);
    CHECK_THROWS_AS(w.run(), WorkerFault);
  }
  SUBCASE("an aborted stream may end inside a block") {
    Program q = assemble("LOAD r1, [r2]\nHALT");
    Instrumenter qc(q, {});
    RecordChannel ch(cc);
    AnalysisWorker w(0, ch, qc, mem, tasks);
    ch.write(qc.block_at(kCodeBase).analysis.address);
    ch.close(true);
    w.run();
    CHECK(w.counters().truncated);
    CHECK(w.counters().blocks_executed == 0);
  }
  SUBCASE("blocks span buffers") {
    Program q = assemble("MEMCPY r1, r2, r3\nHALT");
    Instrumenter qc(q, {});
    ChannelConfig small;
    small.capacity = 3;
    small.n_buffers = 8;
    RecordChannel ch(small);
    AnalysisWorker w(0, ch, qc, mem, tasks);
    mem.write(0x5000, std::vector<TaintLabel>{1, 2});
    const Addr hdr = qc.block_at(kCodeBase).analysis.address;
    for (int i = 0; i < 3; ++i) {
      ch.write(hdr);
      ch.write(0x5000);
      ch.write(0x6000 + i * 16);
      ch.write(2);
    }
    ch.close(false);
    CHECK_FALSE(w.pump(0));
    w.run();
    CHECK(w.counters().blocks_executed == 3);
    CHECK(w.counters().headers == 3);
    CHECK(w.counters().data_consumed == 9);
    CHECK(w.counters().switches >= 5);
    std::vector<TaintLabel> got(2);
    mem.read(0x6020, got);
    CHECK(got == std::vector<TaintLabel>{1, 2});
  }
}

TEST_CASE("worker counters on full runs") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    ExperimentConfig cfg;
    cfg.workload = "random:" + std::to_string(seed);
    cfg.deterministic = true;
    cfg.buffer_entries = 16;
    cfg.seed = seed;
    const auto res = run_experiment(cfg);
    REQUIRE(res.report.status == "ok");
    CHECK(res.report.db <= res.report.cb);
    CHECK(res.report.blocks_executed > 0);
    CHECK(res.report.blocks_executed <= res.report.steps);
  }
}
