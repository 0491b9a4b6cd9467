#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "half/isa.hpp"

namespace half {

class AssemblyError : public std::runtime_error {
 public:
  AssemblyError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Line-oriented assembly:
//   ; comment
//   label:            (may share a line with an instruction)
//   .entry label
//   .data ADDR b0 b1 ... | "text"
//   .quad ADDR v0 v1 ... (64-bit little-endian; values may be @label)
//   OPCODE[.width] operands
// Immediates are decimal, 0x-hex, or @label (code address of a label).
// Without .entry the first instruction is the entry point.
Program assemble(std::string_view source);

}  // namespace half
