#include "half/taint.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace half {

namespace {
struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void mix(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
};
}  // namespace

std::uint64_t taint_digest(const std::map<Addr, TaintLabel>& shadow) {
  Fnv f;
  for (const auto& [a, l] : shadow) {
    f.mix(a, 8);
    f.mix(l, 1);
  }
  return f.h;
}

std::uint64_t taint_digest(const std::vector<RegisterTaint>& regs) {
  Fnv f;
  for (const auto& t : regs)
    for (const auto& r : t.regs)
      for (auto b : r) f.mix(b, 1);
  return f.h;
}

bool RegisterTaint::any(std::uint8_t r) const {
  return std::any_of(regs[r].begin(), regs[r].end(), [](TaintLabel l) { return l != 0; });
}

TaintLabel RegisterTaint::merged(std::uint8_t r) const {
  TaintLabel m = 0;
  for (auto l : regs[r]) m |= l;
  return m;
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::None: return "None";
    case TaskKind::TaintSource: return "TaintSource";
    case TaskKind::TaintCheck: return "TaintCheck";
    case TaskKind::IndirectCheck: return "IndirectCheck";
    case TaskKind::Custom: return "Custom";
  }
  return "?";
}

std::string_view to_string(AlertKind k) {
  return k == AlertKind::SinkHit ? "SinkHit" : "TaintedIndirectTarget";
}

std::string_view to_string(TaintOpKind k) {
  static constexpr std::string_view names[] = {"Copy",        "Union",       "Clear",        "CopyMem2Reg",
                                               "CopyReg2Mem", "BlockCopy",   "ShiftAdjust",  "CondCopy",
                                               "CheckIndirect", "TaskCall"};
  return names[static_cast<int>(k)];
}

namespace {
constexpr Word kCustomTagBase = 0x100;
constexpr Word kCustomTagLimit = 0x100 + 0xFFFF;
}  // namespace

Word encode_task_tag(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::None: return 0;
    case TaskKind::TaintSource: return 1;
    case TaskKind::TaintCheck: return 2;
    case TaskKind::IndirectCheck: return 3;
    case TaskKind::Custom:
      if (spec.custom_id > kCustomTagLimit - kCustomTagBase) throw std::invalid_argument("custom task id too large");
      return kCustomTagBase + spec.custom_id;
  }
  throw std::invalid_argument("unknown task kind");
}

TaskSpec decode_task_tag(Word tag) {
  TaskSpec s;
  if (tag <= 3) {
    s.kind = static_cast<TaskKind>(tag);
    return s;
  }
  if (tag >= kCustomTagBase && tag <= kCustomTagLimit) {
    s.kind = TaskKind::Custom;
    s.custom_id = static_cast<std::uint32_t>(tag - kCustomTagBase);
    return s;
  }
  std::ostringstream os;
  os << "unknown task tag 0x" << std::hex << tag;
  throw std::invalid_argument(os.str());
}

std::string alert_to_json_line(const Alert& a) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(a.kind));
  j["tid"] = a.tid;
  j["block_pc"] = a.block_pc;
  j["address"] = a.address;
  j["len"] = a.len;
  j["labels"] = a.labels;
  return j.dump();
}

void AlertSink::push(const Alert& a) {
  {
    std::lock_guard lk(mu_);
    alerts_.push_back(a);
  }
  if (listener_) listener_(a);
}

std::vector<Alert> AlertSink::snapshot() const {
  std::lock_guard lk(mu_);
  return alerts_;
}

std::size_t AlertSink::size() const {
  std::lock_guard lk(mu_);
  return alerts_.size();
}

namespace {

// Chunked so huge ranges never allocate len bytes at once.
constexpr std::size_t kChunk = 4096;

template <typename Fn>
void for_chunks(Addr addr, Word len, Fn&& fn) {
  while (len > 0) {
    const auto n = static_cast<std::size_t>(std::min<Word>(len, kChunk));
    fn(addr, n);
    addr += n;
    len -= n;
  }
}

void fill_range(MemoryTaint& mem, Addr addr, Word len, TaintLabel label) {
  std::vector<TaintLabel> buf(kChunk, label);
  for_chunks(addr, len, [&](Addr a, std::size_t n) { mem.write(a, std::span<const TaintLabel>(buf.data(), n)); });
}

}  // namespace

std::optional<Alert> TaskDispatcher::dispatch(const TaskInvocation& inv, TaintContext& ctx) {
  counters.tasks.fetch_add(1, std::memory_order_relaxed);
  Alert alert;
  alert.tid = ctx.tid;
  alert.block_pc = ctx.block_pc;
  switch (inv.kind) {
    case TaskKind::None: return std::nullopt;
    case TaskKind::TaintSource:
      fill_range(ctx.mem, inv.addr, inv.len, inv.label);
      counters.rb.fetch_add(inv.len, std::memory_order_relaxed);
      return std::nullopt;
    case TaskKind::TaintCheck: {
      std::uint64_t tainted = 0;
      TaintLabel seen = 0;
      std::vector<TaintLabel> buf(kChunk);
      for_chunks(inv.addr, inv.len, [&](Addr a, std::size_t n) {
        ctx.mem.read(a, std::span<TaintLabel>(buf.data(), n));
        for (std::size_t i = 0; i < n; ++i) {
          if (buf[i] != 0) ++tainted;
          seen |= buf[i];
        }
      });
      counters.cb.fetch_add(inv.len, std::memory_order_relaxed);
      counters.db.fetch_add(tainted, std::memory_order_relaxed);
      if (tainted == 0) return std::nullopt;
      alert.kind = AlertKind::SinkHit;
      alert.address = inv.addr;
      alert.len = inv.len;
      alert.labels = seen;
      alerts.push(alert);
      return alert;
    }
    case TaskKind::IndirectCheck: {
      const TaintLabel m = ctx.regs.merged(inv.reg);
      if (m == 0) return std::nullopt;
      alert.kind = AlertKind::TaintedIndirectTarget;
      alert.address = inv.target;
      alert.len = kWordBytes;
      alert.labels = m;
      alerts.push(alert);
      return alert;
    }
    case TaskKind::Custom: {
      auto it = custom_.find(inv.custom_id);
      if (it == custom_.end())
        throw std::runtime_error("no handler registered for custom task " + std::to_string(inv.custom_id));
      auto res = it->second(inv, ctx);
      if (res) alerts.push(*res);
      return res;
    }
  }
  return std::nullopt;
}

std::string format_op(const TaintOp& op) {
  std::ostringstream os;
  os << to_string(op.kind);
  auto r = [](int i) { return "r" + std::to_string(i); };
  auto e = [&](std::uint32_t k) { return "e" + std::to_string(k); };
  switch (op.kind) {
    case TaintOpKind::Copy:
    case TaintOpKind::Union: os << " " << r(op.dst) << " <- " << r(op.src); break;
    case TaintOpKind::Clear:
      if (op.mem_range)
        os << " mem[" << e(op.entry + 1) << ", +" << e(op.entry + 2) << ")";
      else
        os << " " << r(op.dst);
      break;
    case TaintOpKind::CopyMem2Reg: os << " " << r(op.dst) << " <- mem." << int(op.width) << "[" << e(op.entry) << "]"; break;
    case TaintOpKind::CopyReg2Mem: os << " mem." << int(op.width) << "[" << e(op.entry) << "] <- " << r(op.src); break;
    case TaintOpKind::BlockCopy:
      os << " dst=" << e(op.entry + 1) << " src=" << e(op.entry) << " n=" << e(op.entry + 2);
      break;
    case TaintOpKind::ShiftAdjust: os << " " << r(op.dst) << " count=" << e(op.entry); break;
    case TaintOpKind::CondCopy: os << " " << r(op.dst) << " <- " << r(op.src) << " if " << e(op.entry); break;
    case TaintOpKind::CheckIndirect: os << " " << r(op.src) << " target=" << e(op.entry) << (op.dispatch ? "" : " (off)"); break;
    case TaintOpKind::TaskCall:
      os << " tag=" << e(op.entry) << " args=" << e(op.entry + 1) << ".." << e(op.entry + 3)
         << (op.clear_if_none ? " clear-if-none" : "");
      break;
  }
  return os.str();
}

void apply_taint_op(const TaintOp& op, std::span<const Word> entries, TaintContext& ctx) {
  auto& R = ctx.regs.regs;
  switch (op.kind) {
    case TaintOpKind::Copy: R[op.dst] = R[op.src]; return;
    case TaintOpKind::Union:
      for (std::size_t i = 0; i < kWordBytes; ++i) R[op.dst][i] |= R[op.src][i];
      return;
    case TaintOpKind::Clear:
      if (op.mem_range)
        fill_range(ctx.mem, entries[op.entry + 1], entries[op.entry + 2], 0);
      else
        R[op.dst].fill(0);
      return;
    case TaintOpKind::CopyMem2Reg: {
      std::array<TaintLabel, kWordBytes> buf{};
      ctx.mem.read(entries[op.entry], std::span<TaintLabel>(buf.data(), op.width));
      R[op.dst] = buf;  // narrow loads zero-extend: upper bytes become clean
      return;
    }
    case TaintOpKind::CopyReg2Mem:
      ctx.mem.write(entries[op.entry], std::span<const TaintLabel>(R[op.src].data(), op.width));
      return;
    case TaintOpKind::BlockCopy: {
      // Forward byte order, matching the architectural MEMCPY for overlaps.
      const Addr src = entries[op.entry];
      const Addr dst = entries[op.entry + 1];
      const Word count = entries[op.entry + 2];
      std::vector<TaintLabel> buf(kChunk);
      if (dst > src && dst - src < count) {
        TaintLabel b[1];
        for (Word i = 0; i < count; ++i) {
          ctx.mem.read(src + i, std::span<TaintLabel>(b, 1));
          ctx.mem.write(dst + i, std::span<const TaintLabel>(b, 1));
        }
        return;
      }
      for_chunks(0, count, [&](Addr off, std::size_t n) {
        ctx.mem.read(src + off, std::span<TaintLabel>(buf.data(), n));
        ctx.mem.write(dst + off, std::span<const TaintLabel>(buf.data(), n));
      });
      return;
    }
    case TaintOpKind::ShiftAdjust:
      // Byte-conservative: the shifted register keeps its own byte taints.
      return;
    case TaintOpKind::CondCopy:
      if (entries[op.entry] != 0) R[op.dst] = R[op.src];
      return;
    case TaintOpKind::CheckIndirect: {
      if (!op.dispatch) return;
      TaskInvocation inv;
      inv.kind = TaskKind::IndirectCheck;
      inv.target = entries[op.entry];
      inv.reg = op.src;
      ctx.tasks.dispatch(inv, ctx);
      return;
    }
    case TaintOpKind::TaskCall: {
      const TaskSpec spec = decode_task_tag(entries[op.entry]);
      TaskInvocation inv;
      inv.kind = spec.kind;
      inv.custom_id = spec.custom_id;
      inv.addr = entries[op.entry + 1];
      inv.len = entries[op.entry + 2];
      inv.label = static_cast<TaintLabel>(entries[op.entry + 3]);
      if (spec.kind == TaskKind::None) {
        if (op.clear_if_none) fill_range(ctx.mem, inv.addr, inv.len, 0);
        return;
      }
      ctx.tasks.dispatch(inv, ctx);
      return;
    }
  }
}

}  // namespace half
