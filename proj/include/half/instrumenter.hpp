// Basic-block discovery, record planning and analysis-block generation. The
// per-opcode rule table lives in plan_instruction/gen_instruction_ops and is
// the only place taint semantics are decided.

#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "half/isa.hpp"
#include "half/machine.hpp"
#include "half/taint.hpp"

namespace half {

enum class Terminator : std::uint8_t { Fallthrough, Jump, Indirect, Syscall, Halt };
std::string_view to_string(Terminator t);

// Straight-line runs are capped so a block always fits a small buffer.
inline constexpr std::size_t kMaxBlockInstructions = 64;

struct BasicBlock {
  Addr start = 0;
  std::vector<Instruction> instructions;
  Terminator terminator = Terminator::Fallthrough;
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

BasicBlock discover_block(const Program& program, Addr entry);  // throws std::invalid_argument

enum class CaptureKind : std::uint8_t { EffectiveAddress, RegisterValue, FlagBit, TaskArgs };
std::string_view to_string(CaptureKind k);

// TaskArgs occupy four consecutive captures: slot 0 tag, 1 addr, 2 len, 3 label.
struct Capture {
  CaptureKind kind = CaptureKind::EffectiveAddress;
  std::uint8_t reg = 0;   // RegisterValue register, or TaskArgs slot
  std::uint16_t instr = 0;
  friend bool operator==(const Capture&, const Capture&) = default;
};

// Syscall and site bindings for task stubs.
struct TaskBindings {
  std::map<SyscallKind, TaskSpec> syscalls;
  std::map<Addr, TaskSpec> sites;  // LOAD/STORE/MEMCPY addresses only
  bool indirect_checks = true;

  static TaskBindings defaults();  // RECV->Source(1), FREAD->Source(2), SEND/FWRITE->Check
  TaskSpec for_syscall(SyscallKind k) const;
  const TaskSpec* for_site(Addr a) const;
};

// True for syscalls whose completion carries a TaskArgs record.
bool syscall_has_task_args(SyscallKind k);

struct RecordPlan {
  Addr block = 0;
  std::vector<Capture> captures;
  std::vector<std::uint32_t> first_capture;  // per instruction, index into captures
  std::size_t expected_entry_count = 1;
  std::size_t instructions = 0;
  std::size_t instructions_with_captures = 0;
  double pi() const {
    return instructions == 0 ? 0.0 : double(instructions_with_captures) / double(instructions);
  }
  friend bool operator==(const RecordPlan&, const RecordPlan&) = default;
};

std::vector<Capture> plan_instruction(const Instruction& in, std::uint16_t index, const TaskSpec* site_task);
RecordPlan plan_block(const BasicBlock& block, const TaskBindings& bindings = {});

// Taint semantics of one instruction. `first_entry` is the block-relative
// index of its first capture.
std::vector<TaintOp> gen_instruction_ops(const Instruction& in, std::uint16_t index, std::uint32_t first_entry,
                                         const TaskBindings& bindings, const TaskSpec* site_task);

// Runtime value of a pre-instruction capture (everything except TaskArgs).
Word capture_value(const Capture& c, const Instruction& in, const MachineState& st);

// Resolved TaskArgs words [tag, addr, len, label].
std::array<Word, 4> syscall_task_args(const TaskSpec& spec, const SyscallEffect& eff);
std::array<Word, 4> site_task_args(const TaskSpec& spec, const Instruction& in, const MachineState& st);

inline constexpr Addr kAnalysisCodeBase = 0x7F00'0000'0000ULL;
inline constexpr Addr kAnalysisCodeAlign = 16;

struct AnalysisBlock {
  Addr address = 0;
  Addr target_pc = 0;
  std::vector<TaintOp> ops;
  std::vector<Capture> consumes;
  std::size_t expected_entry_count = 1;
  std::size_t instructions = 0;
  std::size_t instructions_with_captures = 0;
  std::size_t byte_size = 0;
};

AnalysisBlock gen_analysis_block(const BasicBlock& block, const RecordPlan& plan, const TaskBindings& bindings);

// AM accounting: 1 byte per op plus 8 per consumed entry.
std::size_t analysis_byte_size(const std::vector<TaintOp>& ops);

std::string dump_analysis_block(const AnalysisBlock& ab, const BasicBlock& bb);

// Shared code cache: block start -> published (BasicBlock, AnalysisBlock).
// Append-only; entries never move once published.
class Instrumenter {
 public:
  struct Entry {
    BasicBlock block;
    RecordPlan plan;
    AnalysisBlock analysis;
  };

  Instrumenter(const Program& program, TaskBindings bindings);

  const Entry& block_at(Addr pc);               // discover + generate on miss
  const Entry* find_by_code(Addr analysis_addr) const;
  const Entry* find_by_pc(Addr pc) const;

  const TaskBindings& bindings() const { return bindings_; }
  const Program& program() const { return program_; }

  std::size_t block_count() const;
  std::size_t total_instructions() const;
  std::size_t instrumented_instructions() const;
  double pi() const;
  std::size_t am_bytes() const;
  std::string dump() const;

 private:
  const Program& program_;
  TaskBindings bindings_;
  mutable std::shared_mutex mu_;
  std::map<Addr, std::unique_ptr<Entry>> by_pc_;
  std::unordered_map<Addr, const Entry*> by_code_;
  Addr next_code_ = kAnalysisCodeBase;
};

}  // namespace half
