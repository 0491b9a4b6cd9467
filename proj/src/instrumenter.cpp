#include "half/instrumenter.hpp"

#include <sstream>
#include <stdexcept>

namespace half {

std::string_view to_string(Terminator t) {
  switch (t) {
    case Terminator::Fallthrough: return "fallthrough";
    case Terminator::Jump: return "jump";
    case Terminator::Indirect: return "indirect";
    case Terminator::Syscall: return "syscall";
    case Terminator::Halt: return "halt";
  }
  return "?";
}

std::string_view to_string(CaptureKind k) {
  switch (k) {
    case CaptureKind::EffectiveAddress: return "EffAddr";
    case CaptureKind::RegisterValue: return "RegValue";
    case CaptureKind::FlagBit: return "FlagBit";
    case CaptureKind::TaskArgs: return "TaskArgs";
  }
  return "?";
}

namespace {

Terminator terminator_of(Opcode op) {
  switch (op) {
    case Opcode::JCC:
    case Opcode::JMP:
    case Opcode::CALL: return Terminator::Jump;
    case Opcode::JMPIND:
    case Opcode::CALLIND:
    case Opcode::RET: return Terminator::Indirect;
    case Opcode::SYSCALL: return Terminator::Syscall;
    case Opcode::HALT: return Terminator::Halt;
    default: return Terminator::Fallthrough;
  }
}

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

}  // namespace

BasicBlock discover_block(const Program& program, Addr entry) {
  if (!program.valid_code_address(entry)) throw std::invalid_argument("invalid block entry " + hex(entry));
  BasicBlock b;
  b.start = entry;
  for (Addr pc = entry; program.valid_code_address(pc); pc += kCodeStride) {
    const Instruction& in = program.at(pc);
    b.instructions.push_back(in);
    if (is_control_transfer(in.op)) {
      b.terminator = terminator_of(in.op);
      break;
    }
    if (b.instructions.size() == kMaxBlockInstructions) break;
  }
  return b;
}

TaskBindings TaskBindings::defaults() {
  TaskBindings b;
  b.syscalls[SyscallKind::RECV] = TaskSpec{TaskKind::TaintSource, 1, 0};
  b.syscalls[SyscallKind::FREAD] = TaskSpec{TaskKind::TaintSource, 2, 0};
  b.syscalls[SyscallKind::SEND] = TaskSpec{TaskKind::TaintCheck, 0, 0};
  b.syscalls[SyscallKind::FWRITE] = TaskSpec{TaskKind::TaintCheck, 0, 0};
  return b;
}

TaskSpec TaskBindings::for_syscall(SyscallKind k) const {
  auto it = syscalls.find(k);
  return it == syscalls.end() ? TaskSpec{} : it->second;
}

const TaskSpec* TaskBindings::for_site(Addr a) const {
  auto it = sites.find(a);
  return it == sites.end() ? nullptr : &it->second;
}

bool syscall_has_task_args(SyscallKind k) {
  switch (k) {
    case SyscallKind::RECV:
    case SyscallKind::FREAD:
    case SyscallKind::SEND:
    case SyscallKind::FWRITE:
    case SyscallKind::ALLOC: return true;
    default: return false;
  }
}

namespace {

void push_task_args(std::vector<Capture>& out, std::uint16_t index) {
  for (std::uint8_t slot = 0; slot < 4; ++slot) out.push_back({CaptureKind::TaskArgs, slot, index});
}

void check_site_task(const Instruction& in, const TaskSpec* site_task) {
  if (!site_task) return;
  if (in.op != Opcode::LOAD && in.op != Opcode::STORE && in.op != Opcode::MEMCPY)
    throw std::invalid_argument("task site must be a LOAD, STORE or MEMCPY instruction");
  if (site_task->kind == TaskKind::None || site_task->kind == TaskKind::IndirectCheck)
    throw std::invalid_argument("task kind " + std::string(to_string(site_task->kind)) + " cannot bind to a memory site");
}

}  // namespace

std::vector<Capture> plan_instruction(const Instruction& in, std::uint16_t index, const TaskSpec* site_task) {
  check_site_task(in, site_task);
  std::vector<Capture> c;
  switch (in.op) {
    case Opcode::LOAD:
    case Opcode::STORE: c.push_back({CaptureKind::EffectiveAddress, 0, index}); break;
    case Opcode::SHL:
    case Opcode::SHR:
      if (!in.src_imm) c.push_back({CaptureKind::RegisterValue, in.rs, index});
      break;
    case Opcode::MEMCPY:
      c.push_back({CaptureKind::RegisterValue, in.rs, index});
      c.push_back({CaptureKind::RegisterValue, in.rd, index});
      c.push_back({CaptureKind::RegisterValue, in.rc, index});
      break;
    case Opcode::CMOV: c.push_back({CaptureKind::FlagBit, 0, index}); break;
    case Opcode::JMPIND:
    case Opcode::CALLIND: c.push_back({CaptureKind::RegisterValue, in.rs, index}); break;
    case Opcode::SYSCALL:
      if (syscall_has_task_args(in.sys)) push_task_args(c, index);
      break;
    default: break;
  }
  if (site_task) push_task_args(c, index);
  return c;
}

RecordPlan plan_block(const BasicBlock& block, const TaskBindings& bindings) {
  RecordPlan p;
  p.block = block.start;
  p.instructions = block.instructions.size();
  for (std::size_t i = 0; i < block.instructions.size(); ++i) {
    const Addr pc = block.start + kCodeStride * i;
    auto c = plan_instruction(block.instructions[i], static_cast<std::uint16_t>(i), bindings.for_site(pc));
    p.first_capture.push_back(static_cast<std::uint32_t>(p.captures.size()));
    if (!c.empty()) ++p.instructions_with_captures;
    p.captures.insert(p.captures.end(), c.begin(), c.end());
  }
  p.expected_entry_count = p.captures.size() + 1;
  return p;
}

std::vector<TaintOp> gen_instruction_ops(const Instruction& in, std::uint16_t index, std::uint32_t first_entry,
                                         const TaskBindings& bindings, const TaskSpec* site_task) {
  check_site_task(in, site_task);
  std::vector<TaintOp> ops;
  auto op = [&](TaintOpKind k) -> TaintOp& {
    TaintOp o;
    o.kind = k;
    o.instr = index;
    ops.push_back(o);
    return ops.back();
  };
  std::uint32_t e = first_entry;
  switch (in.op) {
    case Opcode::MOVRI: op(TaintOpKind::Clear).dst = in.rd; break;
    case Opcode::MOVRR: {
      auto& o = op(TaintOpKind::Copy);
      o.dst = in.rd;
      o.src = in.rs;
      break;
    }
    case Opcode::LOAD: {
      auto& o = op(TaintOpKind::CopyMem2Reg);
      o.dst = in.rd;
      o.width = in.width;
      o.entry = e++;
      o.entries = 1;
      break;
    }
    case Opcode::STORE: {
      auto& o = op(TaintOpKind::CopyReg2Mem);
      o.src = in.rs;
      o.width = in.width;
      o.entry = e++;
      o.entries = 1;
      break;
    }
    case Opcode::ADD:
    case Opcode::SUB:
    case Opcode::AND:
    case Opcode::OR:
    case Opcode::XOR:
      if (in.src_imm) break;  // immediate operand: destination keeps its taint
      if (in.op == Opcode::XOR && in.rd == in.rs) {
        op(TaintOpKind::Clear).dst = in.rd;
      } else {
        auto& o = op(TaintOpKind::Union);
        o.dst = in.rd;
        o.src = in.rs;
      }
      break;
    case Opcode::SHL:
    case Opcode::SHR:
      if (!in.src_imm) {
        auto& o = op(TaintOpKind::ShiftAdjust);
        o.dst = in.rd;
        o.src = in.rs;
        o.entry = e++;
        o.entries = 1;
      }
      break;
    case Opcode::CMOV: {
      auto& o = op(TaintOpKind::CondCopy);
      o.dst = in.rd;
      o.src = in.rs;
      o.entry = e++;
      o.entries = 1;
      break;
    }
    case Opcode::MEMCPY: {
      auto& o = op(TaintOpKind::BlockCopy);
      o.entry = e;
      o.entries = 3;
      e += 3;
      break;
    }
    case Opcode::JMPIND:
    case Opcode::CALLIND: {
      auto& o = op(TaintOpKind::CheckIndirect);
      o.src = in.rs;
      o.entry = e++;
      o.entries = 1;
      o.dispatch = bindings.indirect_checks;
      break;
    }
    case Opcode::SYSCALL:
      if (in.sys != SyscallKind::EXIT) op(TaintOpKind::Clear).dst = 0;  // r0 receives a clean result
      switch (in.sys) {
        case SyscallKind::RECV:
        case SyscallKind::FREAD:
        case SyscallKind::SEND:
        case SyscallKind::FWRITE: {
          auto& o = op(TaintOpKind::TaskCall);
          o.entry = e;
          o.entries = 4;
          o.clear_if_none = in.sys == SyscallKind::RECV || in.sys == SyscallKind::FREAD;
          e += 4;
          break;
        }
        case SyscallKind::ALLOC: {
          auto& o = op(TaintOpKind::Clear);
          o.mem_range = true;
          o.entry = e;
          o.entries = 4;
          e += 4;
          break;
        }
        default: break;
      }
      break;
    default: break;  // CMP, JCC, JMP, CALL, RET, HALT
  }
  if (site_task) {
    auto& o = op(TaintOpKind::TaskCall);
    o.entry = e;
    o.entries = 4;
  }
  return ops;
}

Word capture_value(const Capture& c, const Instruction& in, const MachineState& st) {
  switch (c.kind) {
    case CaptureKind::EffectiveAddress: return effective_address(in.mem, st.regs);
    case CaptureKind::RegisterValue: {
      const Word v = st.regs[c.reg];
      return (in.op == Opcode::SHL || in.op == Opcode::SHR) ? (v & 63) : v;
    }
    case CaptureKind::FlagBit: return eval_cond(in.cond, st.flags) ? 1 : 0;
    case CaptureKind::TaskArgs: break;
  }
  throw std::logic_error("TaskArgs are not a pre-instruction capture");
}

std::array<Word, 4> syscall_task_args(const TaskSpec& spec, const SyscallEffect& eff) {
  return {encode_task_tag(spec), eff.addr, eff.len, spec.label};
}

std::array<Word, 4> site_task_args(const TaskSpec& spec, const Instruction& in, const MachineState& st) {
  if (in.op == Opcode::MEMCPY) return {encode_task_tag(spec), st.regs[in.rd], st.regs[in.rc], spec.label};
  return {encode_task_tag(spec), effective_address(in.mem, st.regs), in.width, spec.label};
}

std::size_t analysis_byte_size(const std::vector<TaintOp>& ops) {
  std::size_t n = 0;
  for (const auto& o : ops) n += 1 + 8 * std::size_t(o.entries);
  return n;
}

AnalysisBlock gen_analysis_block(const BasicBlock& block, const RecordPlan& plan, const TaskBindings& bindings) {
  AnalysisBlock ab;
  ab.target_pc = block.start;
  ab.consumes = plan.captures;
  ab.expected_entry_count = plan.expected_entry_count;
  ab.instructions = plan.instructions;
  ab.instructions_with_captures = plan.instructions_with_captures;
  for (std::size_t i = 0; i < block.instructions.size(); ++i) {
    const Addr pc = block.start + kCodeStride * i;
    const auto first = plan.first_capture.at(i) + 1;  // +1 skips the header
    auto ops = gen_instruction_ops(block.instructions[i], static_cast<std::uint16_t>(i), first, bindings,
                                   bindings.for_site(pc));
    ab.ops.insert(ab.ops.end(), ops.begin(), ops.end());
  }
  ab.byte_size = analysis_byte_size(ab.ops);
  return ab;
}

std::string dump_analysis_block(const AnalysisBlock& ab, const BasicBlock& bb) {
  std::ostringstream os;
  os << hex(ab.address) << " <- " << hex(bb.start) << "  entries=" << ab.expected_entry_count
     << " bytes=" << ab.byte_size << " term=" << to_string(bb.terminator) << "\n";
  std::size_t k = 0;
  for (std::size_t i = 0; i < bb.instructions.size(); ++i) {
    os << "  ; " << format_instruction(bb.instructions[i]) << "\n";
    for (; k < ab.ops.size() && ab.ops[k].instr == i; ++k) os << "    " << format_op(ab.ops[k]) << "\n";
  }
  return os.str();
}

Instrumenter::Instrumenter(const Program& program, TaskBindings bindings)
    : program_(program), bindings_(std::move(bindings)) {
  for (const auto& [addr, spec] : bindings_.sites) {
    if (!program_.valid_code_address(addr)) throw std::invalid_argument("task site " + hex(addr) + " is not code");
    check_site_task(program_.at(addr), &spec);
    encode_task_tag(spec);
  }
  for (const auto& [k, spec] : bindings_.syscalls) {
    if (spec.kind == TaskKind::IndirectCheck) throw std::invalid_argument("IndirectCheck cannot bind to a syscall");
    encode_task_tag(spec);
  }
}

const Instrumenter::Entry& Instrumenter::block_at(Addr pc) {
  {
    std::shared_lock lk(mu_);
    auto it = by_pc_.find(pc);
    if (it != by_pc_.end()) return *it->second;
  }
  auto e = std::make_unique<Entry>();
  e->block = discover_block(program_, pc);
  e->plan = plan_block(e->block, bindings_);
  e->analysis = gen_analysis_block(e->block, e->plan, bindings_);
  std::unique_lock lk(mu_);
  auto it = by_pc_.find(pc);
  if (it != by_pc_.end()) return *it->second;  // another producer published first
  e->analysis.address = next_code_;
  next_code_ += (e->analysis.byte_size + kAnalysisCodeAlign) & ~(kAnalysisCodeAlign - 1);
  const Entry* raw = e.get();
  by_code_[raw->analysis.address] = raw;
  by_pc_[pc] = std::move(e);
  return *raw;
}

const Instrumenter::Entry* Instrumenter::find_by_code(Addr analysis_addr) const {
  std::shared_lock lk(mu_);
  auto it = by_code_.find(analysis_addr);
  return it == by_code_.end() ? nullptr : it->second;
}

const Instrumenter::Entry* Instrumenter::find_by_pc(Addr pc) const {
  std::shared_lock lk(mu_);
  auto it = by_pc_.find(pc);
  return it == by_pc_.end() ? nullptr : it->second.get();
}

std::size_t Instrumenter::block_count() const {
  std::shared_lock lk(mu_);
  return by_pc_.size();
}

std::size_t Instrumenter::total_instructions() const {
  std::shared_lock lk(mu_);
  std::size_t n = 0;
  for (const auto& [pc, e] : by_pc_) n += e->plan.instructions;
  return n;
}

std::size_t Instrumenter::instrumented_instructions() const {
  std::shared_lock lk(mu_);
  std::size_t n = 0;
  for (const auto& [pc, e] : by_pc_) n += e->plan.instructions_with_captures;
  return n;
}

double Instrumenter::pi() const {
  const auto total = total_instructions();
  return total == 0 ? 0.0 : double(instrumented_instructions()) / double(total);
}

std::size_t Instrumenter::am_bytes() const {
  std::shared_lock lk(mu_);
  std::size_t n = 0;
  for (const auto& [pc, e] : by_pc_) n += e->analysis.byte_size;
  return n;
}

std::string Instrumenter::dump() const {
  std::shared_lock lk(mu_);
  std::string out;
  for (const auto& [pc, e] : by_pc_) out += dump_analysis_block(e->analysis, e->block);
  return out;
}

}  // namespace half
