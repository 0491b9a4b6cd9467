// Taint state, task dispatch and alerts. The TaintOp interpreter here is the
// single definition of propagation semantics used by both the decoupled
// analysis workers and the coupled oracle.

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "half/isa.hpp"

namespace half {

using TaintLabel = std::uint8_t;  // bit i: derived from source label i

struct RegisterTaint {
  std::array<std::array<TaintLabel, kWordBytes>, kNumRegs> regs{};
  bool any(std::uint8_t r) const;
  TaintLabel merged(std::uint8_t r) const;
  friend bool operator==(const RegisterTaint&, const RegisterTaint&) = default;
};

// FNV-1a over (address, label) pairs in address order / over every register
// taint byte of every thread. Both sides of an oracle comparison use these.
std::uint64_t taint_digest(const std::map<Addr, TaintLabel>& shadow);
std::uint64_t taint_digest(const std::vector<RegisterTaint>& regs);

// Byte-granular memory taint store.
class MemoryTaint {
 public:
  virtual ~MemoryTaint() = default;
  virtual void read(Addr addr, std::span<TaintLabel> out) = 0;
  virtual void write(Addr addr, std::span<const TaintLabel> labels) = 0;
};

enum class TaskKind : std::uint8_t { None, TaintSource, TaintCheck, IndirectCheck, Custom };

std::string_view to_string(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::None;
  TaintLabel label = 0;
  std::uint32_t custom_id = 0;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Task-type word carried in the record stream.
Word encode_task_tag(const TaskSpec& spec);
TaskSpec decode_task_tag(Word tag);  // throws std::invalid_argument

struct TaskInvocation {
  TaskKind kind = TaskKind::None;
  std::uint32_t custom_id = 0;
  Addr addr = 0;
  Word len = 0;
  TaintLabel label = 0;
  Addr target = 0;
  std::uint8_t reg = 0;
};

enum class AlertKind : std::uint8_t { TaintedIndirectTarget, SinkHit };
std::string_view to_string(AlertKind k);

struct Alert {
  AlertKind kind = AlertKind::SinkHit;
  ThreadId tid = 0;
  Addr block_pc = 0;
  Addr address = 0;
  Word len = 0;
  TaintLabel labels = 0;
  auto operator<=>(const Alert&) const = default;
};

std::string alert_to_json_line(const Alert& a);

class AlertSink {
 public:
  void push(const Alert& a);
  std::vector<Alert> snapshot() const;
  std::size_t size() const;
  void set_listener(std::function<void(const Alert&)> fn) { listener_ = std::move(fn); }

 private:
  mutable std::mutex mu_;
  std::vector<Alert> alerts_;
  std::function<void(const Alert&)> listener_;
};

struct TaintCounters {
  std::atomic<std::uint64_t> rb{0};
  std::atomic<std::uint64_t> cb{0};
  std::atomic<std::uint64_t> db{0};
  std::atomic<std::uint64_t> tasks{0};
};

struct TaintContext;

using CustomTaskHandler = std::function<std::optional<Alert>(const TaskInvocation&, TaintContext&)>;

// Container-side task distribution: sources, checks, indirect-target checks
// and user-registered handlers.
class TaskDispatcher {
 public:
  void register_custom(std::uint32_t id, CustomTaskHandler fn) { custom_[id] = std::move(fn); }
  // Throws std::runtime_error for an unregistered custom id.
  std::optional<Alert> dispatch(const TaskInvocation& inv, TaintContext& ctx);

  TaintCounters counters;
  AlertSink alerts;

 private:
  std::map<std::uint32_t, CustomTaskHandler> custom_;
};

struct TaintContext {
  MemoryTaint& mem;
  RegisterTaint& regs;
  TaskDispatcher& tasks;
  ThreadId tid = 0;
  Addr block_pc = 0;
};

enum class TaintOpKind : std::uint8_t {
  Copy, Union, Clear, CopyMem2Reg, CopyReg2Mem, BlockCopy, ShiftAdjust, CondCopy, CheckIndirect, TaskCall,
};
std::string_view to_string(TaintOpKind k);

// Consumed entries are block-relative indices; entry 0 is the block header.
struct TaintOp {
  TaintOpKind kind = TaintOpKind::Clear;
  std::uint8_t dst = 0;
  std::uint8_t src = 0;
  std::uint8_t width = 8;
  std::uint32_t entry = 0;
  std::uint8_t entries = 0;
  bool mem_range = false;     // Clear: range [entries[entry+1], +entries[entry+2])
  bool clear_if_none = false; // TaskCall: tag None clears the argument range
  bool dispatch = true;       // CheckIndirect: raise the IndirectCheck task
  std::uint16_t instr = 0;    // owning instruction within the block
  friend bool operator==(const TaintOp&, const TaintOp&) = default;
};

std::string format_op(const TaintOp& op);

// Applies one op. `entries` is indexed block-relative.
void apply_taint_op(const TaintOp& op, std::span<const Word> entries, TaintContext& ctx);

}  // namespace half
