#include "half/isa.hpp"

#include <array>
#include <sstream>
#include <stdexcept>

namespace half {

namespace {

constexpr std::array<std::string_view, kNumOpcodes> kOpcodeNames = {
    "MOVRI", "MOVRR", "LOAD", "STORE", "ADD", "SUB", "AND", "OR", "XOR", "SHL", "SHR",
    "CMP", "JCC", "JMP", "JMPIND", "CALL", "CALLIND", "RET", "CMOV", "MEMCPY", "SYSCALL", "HALT",
};
constexpr std::array<std::string_view, 8> kCondNames = {"EQ", "NE", "LT", "GE", "LE", "GT", "B", "AE"};
constexpr std::array<std::string_view, 10> kSyscallNames = {
    "RECV", "SEND", "FREAD", "FWRITE", "ALLOC", "FREE", "SPAWN", "WAIT", "SIGNAL", "EXIT",
};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i].size() != s.size()) continue;
    bool eq = true;
    for (std::size_t j = 0; j < s.size(); ++j) {
      char c = s[j];
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
      if (c != names[i][j]) {
        eq = false;
        break;
      }
    }
    if (eq) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Opcode op) { return kOpcodeNames.at(static_cast<std::size_t>(op)); }
std::string_view to_string(Cond c) { return kCondNames.at(static_cast<std::size_t>(c)); }
std::string_view to_string(SyscallKind k) { return kSyscallNames.at(static_cast<std::size_t>(k)); }
std::optional<Opcode> parse_opcode(std::string_view s) { return lookup<Opcode>(kOpcodeNames, s); }
std::optional<Cond> parse_cond(std::string_view s) { return lookup<Cond>(kCondNames, s); }
std::optional<SyscallKind> parse_syscall(std::string_view s) { return lookup<SyscallKind>(kSyscallNames, s); }

bool eval_cond(Cond c, const Flags& f) {
  switch (c) {
    case Cond::EQ: return f.z;
    case Cond::NE: return !f.z;
    case Cond::LT: return f.s != f.o;
    case Cond::GE: return f.s == f.o;
    case Cond::LE: return f.z || f.s != f.o;
    case Cond::GT: return !f.z && f.s == f.o;
    case Cond::B: return f.c;
    case Cond::AE: return !f.c;
  }
  return false;
}

bool references_memory(Opcode op) {
  return op == Opcode::LOAD || op == Opcode::STORE || op == Opcode::MEMCPY;
}

bool has_dynamic_count(const Instruction& in) {
  return (in.op == Opcode::SHL || in.op == Opcode::SHR) && !in.src_imm;
}

bool reads_flags(Opcode op) { return op == Opcode::CMOV || op == Opcode::JCC; }

bool register_target(Opcode op) { return op == Opcode::JMPIND || op == Opcode::CALLIND; }

bool is_control_transfer(Opcode op) {
  switch (op) {
    case Opcode::JCC:
    case Opcode::JMP:
    case Opcode::JMPIND:
    case Opcode::CALL:
    case Opcode::CALLIND:
    case Opcode::RET:
    case Opcode::SYSCALL:
    case Opcode::HALT:
      return true;
    default:
      return false;
  }
}

void validate(const Instruction& in) {
  if (in.rd >= kNumRegs || in.rs >= kNumRegs || in.rc >= kNumRegs)
    throw std::invalid_argument("register index out of range");
  if (in.mem.base >= kNumRegs || in.mem.index >= kNumRegs)
    throw std::invalid_argument("address register out of range");
  const auto sc = in.mem.scale;
  if (sc != 1 && sc != 2 && sc != 4 && sc != 8) throw std::invalid_argument("scale must be 1, 2, 4 or 8");
  const auto w = in.width;
  if (w != 1 && w != 2 && w != 4 && w != 8) throw std::invalid_argument("width must be 1, 2, 4 or 8");
}

std::string format_instruction(const Instruction& in) {
  std::ostringstream os;
  auto reg = [](unsigned r) { return "r" + std::to_string(r); };
  auto mem = [&](const MemOperand& m) {
    std::ostringstream ms;
    ms << "[" << reg(m.base);
    if (m.has_index) ms << "+" << reg(m.index) << "*" << unsigned(m.scale);
    if (m.disp >= 0) ms << "+" << m.disp;
    else ms << m.disp;
    ms << "]";
    return ms.str();
  };
  auto width = [&] { return in.width == 8 ? std::string() : "." + std::to_string(in.width); };
  auto src = [&] { return in.src_imm ? std::to_string(in.imm) : reg(in.rs); };
  os << to_string(in.op);
  switch (in.op) {
    case Opcode::MOVRI: os << " " << reg(in.rd) << ", " << in.imm; break;
    case Opcode::MOVRR: os << " " << reg(in.rd) << ", " << reg(in.rs); break;
    case Opcode::LOAD: os << width() << " " << reg(in.rd) << ", " << mem(in.mem); break;
    case Opcode::STORE: os << width() << " " << mem(in.mem) << ", " << reg(in.rs); break;
    case Opcode::ADD:
    case Opcode::SUB:
    case Opcode::AND:
    case Opcode::OR:
    case Opcode::XOR:
    case Opcode::SHL:
    case Opcode::SHR:
    case Opcode::CMP: os << " " << reg(in.rd) << ", " << src(); break;
    case Opcode::JCC: os << " " << to_string(in.cond) << ", 0x" << std::hex << in.target; break;
    case Opcode::JMP:
    case Opcode::CALL: os << " 0x" << std::hex << in.target; break;
    case Opcode::JMPIND:
    case Opcode::CALLIND: os << " " << reg(in.rs); break;
    case Opcode::CMOV: os << " " << to_string(in.cond) << ", " << reg(in.rd) << ", " << reg(in.rs); break;
    case Opcode::MEMCPY: os << " " << reg(in.rd) << ", " << reg(in.rs) << ", " << reg(in.rc); break;
    case Opcode::SYSCALL: os << " " << to_string(in.sys); break;
    case Opcode::RET:
    case Opcode::HALT: break;
  }
  return os.str();
}

bool Program::valid_code_address(Addr a) const {
  return a >= kCodeBase && a < code_end() && (a - kCodeBase) % kCodeStride == 0;
}

Addr Program::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw std::out_of_range("no such label: " + name);
  return it->second;
}

}  // namespace half
