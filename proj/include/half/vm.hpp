// Multi-threaded target interpreter driven by a seedable round-robin quantum
// scheduler. All target threads run on the calling OS thread.

#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "half/machine.hpp"
#include "half/world.hpp"

namespace half {

struct VmConfig {
  std::uint64_t seed = 1;
  std::uint32_t max_quantum = 64;
  std::uint64_t max_steps = 500'000'000;
  std::uint64_t throttle = 0;  // scheduler steps a thread sleeps after each RECV
};

enum class ThreadState : std::uint8_t { Runnable, Blocked, Sleeping, Exited };

struct TargetThread {
  MachineState state;
  ThreadState run_state = ThreadState::Runnable;
  std::uint32_t event = 0;
  std::uint64_t wake_at = 0;
  bool pending_wait_return = false;
  Word exit_status = 0;
};

enum class RunStatus : std::uint8_t { Ok, Fault, Interrupted, StepLimit };

struct RunOutcome {
  RunStatus status = RunStatus::Ok;
  FaultKind fault = FaultKind::BadOpcode;
  ThreadId tid = 0;
  Addr pc = 0;
  std::string message;
  std::uint64_t steps = 0;
};

class Vm {
 public:
  Vm(const Program& program, World& world, ExecHooks& hooks, VmConfig cfg = {});

  RunOutcome run();

  const std::vector<TargetThread>& threads() const { return threads_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t waits() const { return waits_; }
  std::uint64_t signals() const { return signals_; }

 private:
  void spawn(Addr entry, Word arg);
  // Runs one instruction (plus any syscall completion) for thread tid.
  void advance(ThreadId tid);
  void complete_wait(ThreadId tid);
  void wake_waiters(std::uint32_t event);
  void exit_thread(ThreadId tid, bool aborted);
  int pick_runnable();

  const Program& program_;
  World& world_;
  ExecHooks& hooks_;
  VmConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<TargetThread> threads_;
  std::vector<std::deque<ThreadId>> waiters_;
  std::size_t cursor_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t waits_ = 0;
  std::uint64_t signals_ = 0;
};

}  // namespace half
