#include "half/machine.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace half {

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::UnmappedMemory: return "UnmappedMemory";
    case FaultKind::BadOpcode: return "BadOpcode";
    case FaultKind::BadJumpTarget: return "BadJumpTarget";
    case FaultKind::StackUnderflow: return "StackUnderflow";
    case FaultKind::StackOverflow: return "StackOverflow";
    case FaultKind::AddressConflict: return "AddressConflict";
    case FaultKind::InvalidEvent: return "InvalidEvent";
    case FaultKind::InvalidAlloc: return "InvalidAlloc";
    case FaultKind::BadFree: return "BadFree";
    case FaultKind::Deadlock: return "Deadlock";
    case FaultKind::SentinelCollision: return "SentinelCollision";
    case FaultKind::NoEntry: return "NoEntry";
  }
  return "?";
}

namespace {

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

// Ranges longer than this are rejected outright; no VM span is that large.
constexpr std::uint64_t kMaxAccess = 1ULL << 32;

}  // namespace

void TargetMemory::commit(Addr page) {
  auto& slot = pages_[page_of(page)];
  if (!slot) slot = std::make_unique<Page>();
}

void TargetMemory::release(Addr page) { pages_.erase(page_of(page)); }

bool TargetMemory::accessible(Addr addr, std::uint64_t len) const {
  if (len == 0) return true;
  if (len > kMaxAccess || addr + len < addr) return false;
  for (Addr p = page_of(addr); p <= page_of(addr + len - 1); p += kPageSize)
    if (!committed(p)) return false;
  return true;
}

void TargetMemory::require(Addr addr, std::uint64_t len) const {
  if (!accessible(addr, len))
    throw VmFault(FaultKind::UnmappedMemory, "access to unmapped memory at " + hex(addr) + " len " + std::to_string(len));
}

TargetMemory::Page& TargetMemory::page_for(Addr addr) {
  auto& pg = *pages_.at(page_of(addr));
  if (!pg.touched) {
    pg.touched = true;
    ++first_touches_;
  }
  return pg;
}

void TargetMemory::read(Addr addr, std::uint8_t* out, std::uint64_t len) {
  require(addr, len);
  while (len > 0) {
    auto& pg = page_for(addr);
    const auto off = addr - page_of(addr);
    const auto n = std::min<std::uint64_t>(len, kPageSize - off);
    std::memcpy(out, pg.bytes.data() + off, n);
    out += n;
    addr += n;
    len -= n;
  }
}

void TargetMemory::write(Addr addr, const std::uint8_t* in, std::uint64_t len) {
  require(addr, len);
  while (len > 0) {
    auto& pg = page_for(addr);
    const auto off = addr - page_of(addr);
    const auto n = std::min<std::uint64_t>(len, kPageSize - off);
    std::memcpy(pg.bytes.data() + off, in, n);
    in += n;
    addr += n;
    len -= n;
  }
}

Word TargetMemory::load(Addr addr, unsigned width) {
  std::uint8_t b[8] = {};
  read(addr, b, width);
  Word v = 0;
  for (unsigned i = 0; i < width; ++i) v |= Word(b[i]) << (8 * i);
  return v;
}

void TargetMemory::store(Addr addr, Word value, unsigned width) {
  std::uint8_t b[8];
  for (unsigned i = 0; i < width; ++i) b[i] = static_cast<std::uint8_t>(value >> (8 * i));
  write(addr, b, width);
}

AluResult alu(Opcode op, Word a, Word b) {
  AluResult r{0, {}};
  auto zs = [&](Word v) {
    r.flags.z = v == 0;
    r.flags.s = (v >> 63) != 0;
  };
  switch (op) {
    case Opcode::ADD: {
      r.value = a + b;
      zs(r.value);
      r.flags.c = r.value < a;
      r.flags.o = ((~(a ^ b) & (a ^ r.value)) >> 63) != 0;
      break;
    }
    case Opcode::SUB:
    case Opcode::CMP: {
      r.value = a - b;
      zs(r.value);
      r.flags.c = a < b;
      r.flags.o = (((a ^ b) & (a ^ r.value)) >> 63) != 0;
      break;
    }
    case Opcode::AND: r.value = a & b; zs(r.value); break;
    case Opcode::OR: r.value = a | b; zs(r.value); break;
    case Opcode::XOR: r.value = a ^ b; zs(r.value); break;
    case Opcode::SHL: r.value = a << (b & 63); zs(r.value); break;
    case Opcode::SHR: r.value = a >> (b & 63); zs(r.value); break;
    default:
      throw std::invalid_argument("alu: not an ALU opcode");
  }
  return r;
}

Addr effective_address(const MemOperand& m, const std::array<Word, kNumRegs>& regs) {
  Addr a = regs[m.base] + static_cast<Word>(m.disp);
  if (m.has_index) a += regs[m.index] * m.scale;
  return a;
}

namespace {

void forward_copy(TargetMemory& mem, Addr dst, Addr src, std::uint64_t count) {
  if (count == 0) return;
  if (!mem.accessible(src, count))
    throw VmFault(FaultKind::UnmappedMemory, "MEMCPY source unmapped at " + hex(src));
  if (!mem.accessible(dst, count))
    throw VmFault(FaultKind::UnmappedMemory, "MEMCPY destination unmapped at " + hex(dst));
  // Byte-by-byte forward semantics: an overlapping copy with dst inside the
  // source replicates the leading period.
  const bool replicate = dst > src && dst < src + count;
  const std::uint64_t chunk_max = replicate ? std::min<std::uint64_t>(dst - src, kPageSize) : kPageSize;
  std::vector<std::uint8_t> tmp;
  if (!replicate && dst < src + count && src < dst + count) {
    tmp.resize(count);
    mem.read(src, tmp.data(), count);
    mem.write(dst, tmp.data(), count);
    return;
  }
  tmp.resize(chunk_max);
  for (std::uint64_t off = 0; off < count;) {
    const auto n = std::min(chunk_max, count - off);
    mem.read(src + off, tmp.data(), n);
    mem.write(dst + off, tmp.data(), n);
    off += n;
  }
}

}  // namespace

StepOutcome step(MachineState& st, const Program& program, TargetMemory& memory, ExecHooks& hooks) {
  StepOutcome out;
  if (!program.valid_code_address(st.pc)) {
    out.kind = StepKind::Fault;
    out.fault = FaultKind::BadJumpTarget;
    out.message = "pc " + hex(st.pc) + " is not a valid instruction address";
    return out;
  }
  const Instruction& in = program.at(st.pc);
  try {
    hooks.before_instruction(st, in);
    auto& r = st.regs;
    const Addr next = st.pc + kCodeStride;
    auto src = [&] { return in.src_imm ? static_cast<Word>(in.imm) : r[in.rs]; };
    auto jump = [&](Addr target) {
      if (!program.valid_code_address(target))
        throw VmFault(FaultKind::BadJumpTarget, "jump to invalid address " + hex(target));
      st.pc = target;
    };
    switch (in.op) {
      case Opcode::MOVRI: r[in.rd] = static_cast<Word>(in.imm); st.pc = next; break;
      case Opcode::MOVRR: r[in.rd] = r[in.rs]; st.pc = next; break;
      case Opcode::LOAD:
        r[in.rd] = memory.load(effective_address(in.mem, r), in.width);
        st.pc = next;
        break;
      case Opcode::STORE:
        memory.store(effective_address(in.mem, r), r[in.rs], in.width);
        st.pc = next;
        break;
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::AND:
      case Opcode::OR:
      case Opcode::XOR:
      case Opcode::SHL:
      case Opcode::SHR: {
        auto res = alu(in.op, r[in.rd], src());
        r[in.rd] = res.value;
        st.flags = res.flags;
        st.pc = next;
        break;
      }
      case Opcode::CMP: st.flags = alu(in.op, r[in.rd], src()).flags; st.pc = next; break;
      case Opcode::JCC:
        if (eval_cond(in.cond, st.flags)) jump(in.target);
        else st.pc = next;
        break;
      case Opcode::JMP: jump(in.target); break;
      case Opcode::JMPIND: jump(r[in.rs]); break;
      case Opcode::CALL:
      case Opcode::CALLIND: {
        if (st.call_stack.size() >= kMaxCallDepth) throw VmFault(FaultKind::StackOverflow, "call stack overflow");
        const Addr target = in.op == Opcode::CALL ? in.target : r[in.rs];
        jump(target);
        st.call_stack.push_back(next);
        break;
      }
      case Opcode::RET:
        if (st.call_stack.empty()) throw VmFault(FaultKind::StackUnderflow, "RET with empty call stack");
        st.pc = st.call_stack.back();
        st.call_stack.pop_back();
        break;
      case Opcode::CMOV:
        if (eval_cond(in.cond, st.flags)) r[in.rd] = r[in.rs];
        st.pc = next;
        break;
      case Opcode::MEMCPY:
        forward_copy(memory, r[in.rd], r[in.rs], r[in.rc]);
        st.pc = next;
        break;
      case Opcode::SYSCALL:
        st.pc = next;
        out.kind = StepKind::SyscallPending;
        out.syscall = in.sys;
        return out;
      case Opcode::HALT:
        out.kind = StepKind::Halted;
        return out;
      default:
        throw VmFault(FaultKind::BadOpcode, "bad opcode");
    }
  } catch (const VmFault& f) {
    out.kind = StepKind::Fault;
    out.fault = f.kind();
    out.message = f.what();
  }
  return out;
}

}  // namespace half
