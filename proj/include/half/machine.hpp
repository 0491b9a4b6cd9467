// Target-side machine: per-thread architectural state, the single-step
// interpreter, and the hook interface the instrumentation layer plugs into.

#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "half/isa.hpp"

namespace half {

enum class FaultKind : std::uint8_t {
  UnmappedMemory,
  BadOpcode,
  BadJumpTarget,
  StackUnderflow,
  StackOverflow,
  AddressConflict,
  InvalidEvent,
  InvalidAlloc,
  BadFree,
  Deadlock,
  SentinelCollision,
  NoEntry,
};

std::string_view to_string(FaultKind k);

class VmFault : public std::runtime_error {
 public:
  VmFault(FaultKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FaultKind kind() const { return kind_; }

 private:
  FaultKind kind_;
};

// Sparse byte-addressable target memory in 4096-byte pages. Only committed
// pages are accessible; any access touching an uncommitted page faults with
// no partial effect.
class TargetMemory {
 public:
  void commit(Addr page);
  void release(Addr page);
  bool committed(Addr page) const { return pages_.count(page) != 0; }
  std::size_t committed_pages() const { return pages_.size(); }

  bool accessible(Addr addr, std::uint64_t len) const;
  // Both throw VmFault(UnmappedMemory).
  void read(Addr addr, std::uint8_t* out, std::uint64_t len);
  void write(Addr addr, const std::uint8_t* in, std::uint64_t len);
  Word load(Addr addr, unsigned width);
  void store(Addr addr, Word value, unsigned width);

  // Pages touched for the first time since commit (demand-fault analog).
  std::uint64_t first_touches() const { return first_touches_; }

 private:
  struct Page {
    std::array<std::uint8_t, kPageSize> bytes{};
    bool touched = false;
  };
  Page& page_for(Addr addr);
  void require(Addr addr, std::uint64_t len) const;

  std::unordered_map<Addr, std::unique_ptr<Page>> pages_;
  std::uint64_t first_touches_ = 0;
};

struct MachineState {
  std::array<Word, kNumRegs> regs{};
  Flags flags{};
  Addr pc = 0;
  ThreadId tid = 0;
  std::vector<Addr> call_stack;
};

inline constexpr std::size_t kMaxCallDepth = 4096;

struct SyscallEffect {
  SyscallKind kind = SyscallKind::EXIT;
  Addr addr = 0;
  Word len = 0;
};

// Hooks are invoked on the executing target thread. A hook may throw VmFault
// to abort the run.
class ExecHooks {
 public:
  virtual ~ExecHooks() = default;
  virtual void before_instruction(const MachineState&, const Instruction&) {}
  virtual void after_syscall(const MachineState&, const Instruction&, const SyscallEffect&) {}
  virtual void on_thread_start(ThreadId) {}
  virtual void on_thread_exit(ThreadId, bool /*aborted*/) {}
  virtual void on_signal(ThreadId) {}
  virtual void on_wait_return(ThreadId) {}
  virtual void on_alloc(ThreadId, Addr, std::uint64_t) {}
  virtual void on_free(ThreadId, Addr, std::uint64_t) {}
  virtual void on_quantum_end() {}
  virtual bool should_stop() { return false; }
};

enum class StepKind : std::uint8_t { Continue, SyscallPending, Halted, Fault };

struct StepOutcome {
  StepKind kind = StepKind::Continue;
  SyscallKind syscall = SyscallKind::EXIT;
  FaultKind fault = FaultKind::BadOpcode;
  std::string message;
};

// Pure architectural semantics shared by the interpreter.
struct AluResult {
  Word value;
  Flags flags;
};
AluResult alu(Opcode op, Word a, Word b);
Addr effective_address(const MemOperand& m, const std::array<Word, kNumRegs>& regs);

// Executes one instruction. SYSCALL advances pc and reports SyscallPending;
// the caller completes it via exec_syscall.
StepOutcome step(MachineState& state, const Program& program, TargetMemory& memory, ExecHooks& hooks);

}  // namespace half
