#include "half/oracle.hpp"

#include <algorithm>
#include <sstream>

#include "half/shadow_memory.hpp"

namespace half {

void FlatTaint::read(Addr addr, std::span<TaintLabel> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto it = map_.find(addr + i);
    out[i] = it == map_.end() ? 0 : it->second;
  }
}

void FlatTaint::write(Addr addr, std::span<const TaintLabel> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) map_[addr + i] = labels[i];
    else map_.erase(addr + i);
  }
}

std::map<Addr, TaintLabel> FlatTaint::nonzero() const { return {map_.begin(), map_.end()}; }

void prepare_world(World& w, const Program& program, const WorldSetup& setup) {
  w.net_in = setup.net_in;
  w.file_in = setup.file_in;
  w.load(program);
  if (setup.prealloc) prealloc_reserve(w, setup.prealloc_base);
}

CoupledHooks::CoupledHooks(const Program& program, const TaskBindings& bindings) : code(program, bindings) {}

void CoupledHooks::on_thread_start(ThreadId tid) {
  if (tid != threads_.size()) throw std::logic_error("thread ids must be dense");
  threads_.emplace_back();
}

void CoupledHooks::apply(ThreadRec& t, ThreadId tid, std::size_t instr) {
  TaintContext ctx{mem, t.regs, tasks, tid, t.block->block.start};
  for (const auto& op : t.block->analysis.ops)
    if (op.instr == instr) apply_taint_op(op, t.entries, ctx);
}

void CoupledHooks::before_instruction(const MachineState& st, const Instruction& in) {
  auto& t = threads_.at(st.tid);
  if (!t.block || t.next >= t.block->block.instructions.size()) {
    t.block = &code.block_at(st.pc);
    t.next = 0;
    t.entries.assign(1, t.block->analysis.address);
  }
  const auto& plan = t.block->plan;
  const std::size_t i = t.next++;
  const std::size_t end = i + 1 < plan.first_capture.size() ? plan.first_capture[i + 1] : plan.captures.size();
  for (std::size_t k = plan.first_capture[i]; k < end;) {
    const Capture& c = plan.captures[k];
    if (c.kind != CaptureKind::TaskArgs) {
      t.entries.push_back(capture_value(c, in, st));
      ++k;
      continue;
    }
    if (in.op == Opcode::SYSCALL) break;
    for (Word w : site_task_args(*code.bindings().for_site(st.pc), in, st)) t.entries.push_back(w);
    k += 4;
  }
  // Taint ops depend only on recorded values, so applying them before the
  // architectural effect is equivalent; syscalls wait for their results.
  if (in.op == Opcode::SYSCALL && syscall_has_task_args(in.sys)) return;
  apply(t, st.tid, i);
}

void CoupledHooks::after_syscall(const MachineState& st, const Instruction& in, const SyscallEffect& eff) {
  if (!syscall_has_task_args(in.sys)) return;
  auto& t = threads_.at(st.tid);
  for (Word w : syscall_task_args(code.bindings().for_syscall(in.sys), eff)) t.entries.push_back(w);
  apply(t, st.tid, t.next - 1);
}

TaintGroundTruth CoupledHooks::truth(const RunOutcome& outcome) const {
  TaintGroundTruth g;
  g.outcome = outcome;
  g.shadow = mem.nonzero();
  for (const auto& t : threads_) g.regs.push_back(t.regs);
  g.rb = tasks.counters.rb.load();
  g.cb = tasks.counters.cb.load();
  g.db = tasks.counters.db.load();
  g.alerts = tasks.alerts.snapshot();
  std::sort(g.alerts.begin(), g.alerts.end());
  return g;
}

TaintGroundTruth run_coupled(const Program& program, const WorldSetup& setup, const TaskBindings& bindings,
                             std::uint64_t seed, std::uint64_t throttle) {
  World world(setup.world);
  CoupledHooks hooks(program, bindings);
  RunOutcome outcome;
  try {
    prepare_world(world, program, setup);
  } catch (const VmFault& f) {
    outcome.status = RunStatus::Fault;
    outcome.fault = f.kind();
    outcome.message = f.what();
    return hooks.truth(outcome);
  }
  VmConfig vc;
  vc.seed = seed;
  vc.throttle = throttle;
  Vm vm(program, world, hooks, vc);
  outcome = vm.run();
  return hooks.truth(outcome);
}

namespace {

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

std::string describe(const Alert& a) {
  std::ostringstream os;
  os << to_string(a.kind) << " tid=" << a.tid << " block=" << hex(a.block_pc) << " addr=" << hex(a.address)
     << " len=" << a.len << " labels=" << int(a.labels);
  return os.str();
}

}  // namespace

Diff compare(const TaintGroundTruth& truth, const TaintGroundTruth& observed) {
  Diff d;
  auto note = [&](const std::string& s) {
    if (d.empty) d.first = s;
    d.empty = false;
    ++d.count;
  };
  // Shadow maps: walk both sorted maps together.
  auto a = truth.shadow.begin();
  auto b = observed.shadow.begin();
  while (a != truth.shadow.end() || b != observed.shadow.end()) {
    if (b == observed.shadow.end() || (a != truth.shadow.end() && a->first < b->first)) {
      note("shadow " + hex(a->first) + ": expected label " + std::to_string(a->second) + ", observed 0");
      ++a;
    } else if (a == truth.shadow.end() || b->first < a->first) {
      note("shadow " + hex(b->first) + ": expected label 0, observed " + std::to_string(b->second));
      ++b;
    } else {
      if (a->second != b->second)
        note("shadow " + hex(a->first) + ": expected label " + std::to_string(a->second) + ", observed " +
             std::to_string(b->second));
      ++a;
      ++b;
    }
  }
  if (truth.regs.size() != observed.regs.size())
    note("thread count: expected " + std::to_string(truth.regs.size()) + ", observed " +
         std::to_string(observed.regs.size()));
  for (std::size_t t = 0; t < std::min(truth.regs.size(), observed.regs.size()); ++t)
    for (std::size_t r = 0; r < kNumRegs; ++r)
      for (std::size_t i = 0; i < kWordBytes; ++i)
        if (truth.regs[t].regs[r][i] != observed.regs[t].regs[r][i])
          note("register taint tid=" + std::to_string(t) + " r" + std::to_string(r) + " byte " + std::to_string(i) +
               ": expected " + std::to_string(truth.regs[t].regs[r][i]) + ", observed " +
               std::to_string(observed.regs[t].regs[r][i]));
  auto counter = [&](const char* name, std::uint64_t x, std::uint64_t y) {
    if (x != y) note(std::string(name) + ": expected " + std::to_string(x) + ", observed " + std::to_string(y));
  };
  counter("RB", truth.rb, observed.rb);
  counter("CB", truth.cb, observed.cb);
  counter("DB", truth.db, observed.db);
  auto ta = truth.alerts;
  auto oa = observed.alerts;
  std::sort(ta.begin(), ta.end());
  std::sort(oa.begin(), oa.end());
  std::vector<Alert> only_truth, only_observed;
  std::set_difference(ta.begin(), ta.end(), oa.begin(), oa.end(), std::back_inserter(only_truth));
  std::set_difference(oa.begin(), oa.end(), ta.begin(), ta.end(), std::back_inserter(only_observed));
  for (const auto& x : only_truth) note("alert only in truth: " + describe(x));
  for (const auto& x : only_observed) note("alert only in observed: " + describe(x));
  return d;
}

}  // namespace half
