// Toy ISA for target programs: 16 x 64-bit registers, four flag bits,
// byte-addressable paged memory, and a syscall surface that the
// instrumentation and sync layers hook.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace half {

using Word = std::uint64_t;
using Addr = std::uint64_t;
using ThreadId = std::uint32_t;

inline constexpr std::size_t kNumRegs = 16;
inline constexpr std::size_t kWordBytes = 8;
inline constexpr Addr kPageSize = 4096;

// Code is not data: instruction i lives at kCodeBase + kCodeStride * i and is
// never readable through LOAD/STORE.
inline constexpr Addr kCodeBase = 0x0010'0000;
inline constexpr Addr kCodeStride = 4;

// Stream sentinel range; never mappable in the target.
inline constexpr Word kReservedLow = 0xFFFF'FFFF'FFFF'0000ULL;
inline constexpr Word kReservedHigh = 0xFFFF'FFFF'FFFF'00FFULL;
inline constexpr Word kEarlySwitch = 0xFFFF'FFFF'FFFF'0001ULL;

constexpr bool in_reserved_range(Word w) { return w >= kReservedLow && w <= kReservedHigh; }
constexpr Addr page_of(Addr a) { return a & ~(kPageSize - 1); }

enum class Opcode : std::uint8_t {
  MOVRI, MOVRR, LOAD, STORE, ADD, SUB, AND, OR, XOR, SHL, SHR, CMP,
  JCC, JMP, JMPIND, CALL, CALLIND, RET, CMOV, MEMCPY, SYSCALL, HALT,
};
inline constexpr int kNumOpcodes = 22;

enum class Cond : std::uint8_t { EQ, NE, LT, GE, LE, GT, B, AE };

enum class SyscallKind : std::uint8_t {
  RECV, SEND, FREAD, FWRITE, ALLOC, FREE, SPAWN, WAIT, SIGNAL, EXIT,
};

std::string_view to_string(Opcode op);
std::string_view to_string(Cond c);
std::string_view to_string(SyscallKind k);
std::optional<Opcode> parse_opcode(std::string_view s);
std::optional<Cond> parse_cond(std::string_view s);
std::optional<SyscallKind> parse_syscall(std::string_view s);

struct Flags {
  bool z = false, s = false, c = false, o = false;
  friend bool operator==(const Flags&, const Flags&) = default;
};

bool eval_cond(Cond c, const Flags& f);

// base + index*scale + disp
struct MemOperand {
  std::uint8_t base = 0;
  std::uint8_t index = 0;
  bool has_index = false;
  std::uint8_t scale = 1;
  std::int64_t disp = 0;
  friend bool operator==(const MemOperand&, const MemOperand&) = default;
};

// Operand usage by opcode:
//   MOVRI rd, imm          MOVRR rd, rs
//   LOAD.w rd, [mem]       STORE.w [mem], rs
//   ALU/SHL/SHR/CMP rd, rs | rd, imm (src_imm)
//   JCC cond, target       JMP/CALL target      JMPIND/CALLIND rs     RET
//   CMOV cond, rd, rs      MEMCPY rd(dst), rs(src), rc(count)
//   SYSCALL kind           HALT
struct Instruction {
  Opcode op = Opcode::HALT;
  std::uint8_t rd = 0;
  std::uint8_t rs = 0;
  std::uint8_t rc = 0;
  bool src_imm = false;
  std::int64_t imm = 0;
  MemOperand mem{};
  std::uint8_t width = 8;
  Cond cond = Cond::EQ;
  Addr target = 0;
  SyscallKind sys = SyscallKind::EXIT;
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

bool references_memory(Opcode op);
bool has_dynamic_count(const Instruction& in);
bool reads_flags(Opcode op);
bool register_target(Opcode op);
bool is_control_transfer(Opcode op);

// Throws std::invalid_argument when an ISA invariant is broken.
void validate(const Instruction& in);

std::string format_instruction(const Instruction& in);

struct DataImage {
  Addr addr = 0;
  std::vector<std::uint8_t> bytes;
};

class Program {
 public:
  std::vector<Instruction> instructions;
  std::optional<Addr> entry;
  std::vector<DataImage> data;
  std::map<std::string, Addr> labels;

  std::size_t size() const { return instructions.size(); }
  bool valid_code_address(Addr a) const;
  std::size_t index_of(Addr a) const { return static_cast<std::size_t>((a - kCodeBase) / kCodeStride); }
  const Instruction& at(Addr a) const { return instructions.at(index_of(a)); }
  static constexpr Addr address_of(std::size_t index) { return kCodeBase + kCodeStride * index; }
  Addr code_end() const { return address_of(instructions.size()); }
  Addr label(const std::string& name) const;
};

}  // namespace half
