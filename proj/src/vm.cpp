#include "half/vm.hpp"

#include <algorithm>
#include <limits>

namespace half {

Vm::Vm(const Program& program, World& world, ExecHooks& hooks, VmConfig cfg)
    : program_(program), world_(world), hooks_(hooks), cfg_(cfg), rng_(cfg.seed),
      waiters_(world.config().event_count) {}

void Vm::spawn(Addr entry, Word arg) {
  if (!program_.valid_code_address(entry))
    throw VmFault(FaultKind::BadJumpTarget, "thread entry is not a valid instruction address");
  TargetThread t;
  t.state.tid = static_cast<ThreadId>(threads_.size());
  t.state.pc = entry;
  t.state.regs[1] = arg;
  threads_.push_back(std::move(t));
  hooks_.on_thread_start(threads_.back().state.tid);
}

void Vm::exit_thread(ThreadId tid, bool aborted) {
  auto& t = threads_[tid];
  if (t.run_state == ThreadState::Exited) return;
  t.run_state = ThreadState::Exited;
  hooks_.on_thread_exit(tid, aborted);
}

void Vm::wake_waiters(std::uint32_t event) {
  auto& q = waiters_[event];
  while (!q.empty() && world_.try_wait(event)) {
    auto& t = threads_[q.front()];
    q.pop_front();
    t.run_state = ThreadState::Runnable;
    t.pending_wait_return = true;
  }
}

void Vm::complete_wait(ThreadId tid) {
  auto& t = threads_[tid];
  t.pending_wait_return = false;
  SyscallEffect eff;
  eff.kind = SyscallKind::WAIT;
  hooks_.after_syscall(t.state, program_.at(t.state.pc - kCodeStride), eff);
  hooks_.on_wait_return(tid);
}

void Vm::advance(ThreadId tid) {
  if (threads_[tid].pending_wait_return) {
    complete_wait(tid);
    return;
  }
  auto* t = &threads_[tid];
  const StepOutcome out = step(t->state, program_, world_.memory, hooks_);
  ++steps_;
  switch (out.kind) {
    case StepKind::Continue: return;
    case StepKind::Halted: exit_thread(tid, false); return;
    case StepKind::Fault: throw VmFault(out.fault, out.message);
    case StepKind::SyscallPending: break;
  }
  const Instruction& in = program_.at(t->state.pc - kCodeStride);
  if (out.syscall == SyscallKind::SIGNAL) {
    world_.check_event(static_cast<std::uint32_t>(std::min<Word>(t->state.regs[1], 0xFFFF'FFFF)));
    ++signals_;
    hooks_.on_signal(tid);
  }
  if (out.syscall == SyscallKind::WAIT) ++waits_;
  const SyscallResult res = exec_syscall(t->state, out.syscall, world_);
  switch (res.status) {
    case SyscallStatus::Done:
      if (out.syscall == SyscallKind::ALLOC) hooks_.on_alloc(tid, res.effect.addr, res.effect.len);
      if (out.syscall == SyscallKind::FREE) hooks_.on_free(tid, res.effect.addr, res.effect.len);
      hooks_.after_syscall(t->state, in, res.effect);
      if (out.syscall == SyscallKind::WAIT) hooks_.on_wait_return(tid);
      if (out.syscall == SyscallKind::SIGNAL) wake_waiters(res.event);
      if ((out.syscall == SyscallKind::RECV || out.syscall == SyscallKind::FREAD) && cfg_.throttle > 0) {
        t->run_state = ThreadState::Sleeping;
        t->wake_at = steps_ + cfg_.throttle;
      }
      return;
    case SyscallStatus::Block:
      t->run_state = ThreadState::Blocked;
      t->event = res.event;
      waiters_[res.event].push_back(tid);
      return;
    case SyscallStatus::Exit:
      t->exit_status = t->state.regs[1];
      exit_thread(tid, false);
      return;
    case SyscallStatus::Spawn: {
      const auto new_tid = static_cast<ThreadId>(threads_.size());
      spawn(res.spawn_entry, res.spawn_arg);
      t = &threads_[tid];  // spawn may reallocate
      t->state.regs[0] = new_tid;
      SyscallEffect eff = res.effect;
      eff.addr = res.spawn_entry;
      eff.len = new_tid;
      hooks_.after_syscall(t->state, in, eff);
      return;
    }
  }
}

int Vm::pick_runnable() {
  const std::size_t n = threads_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (cursor_ + k) % n;
    auto& t = threads_[i];
    if (t.run_state == ThreadState::Sleeping && steps_ >= t.wake_at) t.run_state = ThreadState::Runnable;
    if (t.run_state == ThreadState::Runnable) return static_cast<int>(i);
  }
  return -1;
}

RunOutcome Vm::run() {
  RunOutcome outcome;
  ThreadId current = 0;
  try {
    if (!program_.entry) throw VmFault(FaultKind::NoEntry, "program has no entry point");
    spawn(*program_.entry, 0);
    for (;;) {
      if (std::all_of(threads_.begin(), threads_.end(),
                      [](const TargetThread& t) { return t.run_state == ThreadState::Exited; }))
        break;
      if (hooks_.should_stop()) {
        outcome.status = RunStatus::Interrupted;
        break;
      }
      int pick = pick_runnable();
      if (pick < 0) {
        std::uint64_t next_wake = std::numeric_limits<std::uint64_t>::max();
        for (const auto& t : threads_)
          if (t.run_state == ThreadState::Sleeping) next_wake = std::min(next_wake, t.wake_at);
        if (next_wake == std::numeric_limits<std::uint64_t>::max())
          throw VmFault(FaultKind::Deadlock, "all live threads are blocked on WAIT");
        steps_ = next_wake;
        continue;
      }
      current = static_cast<ThreadId>(pick);
      const std::uint64_t quantum = 1 + rng_() % cfg_.max_quantum;
      for (std::uint64_t q = 0; q < quantum; ++q) {
        advance(current);
        if (threads_[current].run_state != ThreadState::Runnable) break;
        if (steps_ >= cfg_.max_steps) break;
      }
      hooks_.on_quantum_end();
      if (steps_ >= cfg_.max_steps) {
        outcome.status = RunStatus::StepLimit;
        outcome.message = "step limit reached";
        break;
      }
      cursor_ = static_cast<std::size_t>(current) + 1;
    }
  } catch (const VmFault& f) {
    outcome.status = RunStatus::Fault;
    outcome.fault = f.kind();
    outcome.message = f.what();
    outcome.tid = current;
    if (current < threads_.size()) outcome.pc = threads_[current].state.pc;
  }
  if (outcome.status != RunStatus::Ok) {
    for (ThreadId i = 0; i < threads_.size(); ++i) exit_thread(i, true);
  }
  outcome.steps = steps_;
  return outcome;
}

}  // namespace half
