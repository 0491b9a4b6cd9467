#include "half/assembler.hpp"

#include <cctype>
#include <charconv>
#include <optional>
#include <vector>

namespace half {

namespace {

struct Fixup {
  std::size_t index;
  std::string label;
  int line;
  enum class Slot { Target, Imm } slot;
};

struct DataFixup {
  std::size_t image;
  std::size_t offset;
  std::string label;
  int line;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return true;
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  auto last = trim(s.substr(start));
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    if (s[i] == '"') {
      j = s.find('"', i + 1);
      j = (j == std::string_view::npos) ? s.size() : j + 1;
    } else {
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    }
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::uint64_t> parse_number(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::string digits;
  for (char c : s)
    if (c != '_' && c != '\'') digits.push_back(c);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
  if (ec != std::errc() || p != digits.data() + digits.size()) return std::nullopt;
  return neg ? static_cast<std::uint64_t>(-static_cast<std::int64_t>(v)) : v;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Program run() {
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= src_.size()) {
      auto nl = src_.find('\n', pos);
      if (nl == std::string_view::npos) nl = src_.size();
      ++line_no;
      line_ = line_no;
      parse_line(src_.substr(pos, nl - pos));
      pos = nl + 1;
    }
    resolve();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw AssemblyError(line_, msg); }

  void parse_line(std::string_view raw) {
    auto sc = raw.find(';');
    if (sc != std::string_view::npos) raw = raw.substr(0, sc);
    auto s = trim(raw);
    while (!s.empty()) {
      auto colon = s.find(':');
      if (colon == std::string_view::npos) break;
      auto name = trim(s.substr(0, colon));
      if (!is_ident(name) || name.find(' ') != std::string_view::npos) break;
      define_label(std::string(name));
      s = trim(s.substr(colon + 1));
    }
    if (s.empty()) return;
    if (s[0] == '.') {
      directive(s);
      return;
    }
    instruction(s);
  }

  void define_label(const std::string& name) {
    if (prog_.labels.count(name)) fail("duplicate label '" + name + "'");
    prog_.labels[name] = Program::address_of(prog_.instructions.size());
  }

  void directive(std::string_view s) {
    auto toks = split_ws(s);
    auto d = toks[0];
    if (d == ".entry") {
      if (toks.size() != 2) fail(".entry takes one label");
      entry_label_ = std::string(toks[1]);
      entry_line_ = line_;
      return;
    }
    if (d == ".data" || d == ".quad") {
      if (toks.size() < 2) fail(std::string(d) + " needs an address");
      auto addr = parse_number(toks[1]);
      if (!addr) fail("bad address '" + std::string(toks[1]) + "'");
      DataImage img;
      img.addr = *addr;
      for (std::size_t i = 2; i < toks.size(); ++i) {
        auto t = toks[i];
        if (d == ".data") {
          if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
            for (char c : t.substr(1, t.size() - 2)) img.bytes.push_back(static_cast<std::uint8_t>(c));
            continue;
          }
          auto v = parse_number(t);
          if (!v || *v > 0xFF) fail("bad byte '" + std::string(t) + "'");
          img.bytes.push_back(static_cast<std::uint8_t>(*v));
        } else {
          std::uint64_t v = 0;
          if (!t.empty() && t[0] == '@') {
            data_fixups_.push_back({prog_.data.size(), img.bytes.size(), std::string(t.substr(1)), line_});
          } else {
            auto n = parse_number(t);
            if (!n) fail("bad quad '" + std::string(t) + "'");
            v = *n;
          }
          for (int b = 0; b < 8; ++b) img.bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
        }
      }
      prog_.data.push_back(std::move(img));
      return;
    }
    fail("unknown directive '" + std::string(d) + "'");
  }

  std::uint8_t reg(std::string_view t) {
    t = trim(t);
    if (t.size() < 2 || (t[0] != 'r' && t[0] != 'R')) fail("expected register, got '" + std::string(t) + "'");
    auto n = parse_number(t.substr(1));
    if (!n || *n >= kNumRegs) fail("bad register '" + std::string(t) + "'");
    return static_cast<std::uint8_t>(*n);
  }

  bool looks_like_reg(std::string_view t) {
    t = trim(t);
    if (t.size() < 2 || (t[0] != 'r' && t[0] != 'R')) return false;
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
    return true;
  }

  std::int64_t imm(std::string_view t, std::size_t index) {
    t = trim(t);
    if (!t.empty() && t[0] == '@') {
      fixups_.push_back({index, std::string(t.substr(1)), line_, Fixup::Slot::Imm});
      return 0;
    }
    auto v = parse_number(t);
    if (!v) fail("bad immediate '" + std::string(t) + "'");
    return static_cast<std::int64_t>(*v);
  }

  MemOperand mem(std::string_view t) {
    t = trim(t);
    if (t.size() < 3 || t.front() != '[' || t.back() != ']') fail("expected memory operand, got '" + std::string(t) + "'");
    auto body = t.substr(1, t.size() - 2);
    MemOperand m;
    bool have_base = false;
    std::size_t i = 0;
    bool neg = false;
    while (i <= body.size()) {
      std::size_t j = i;
      while (j < body.size() && body[j] != '+' && body[j] != '-') ++j;
      auto term = trim(body.substr(i, j - i));
      if (term.empty()) fail("empty term in memory operand");
      auto star = term.find('*');
      if (star != std::string_view::npos) {
        if (m.has_index || neg) fail("bad index term");
        m.index = reg(term.substr(0, star));
        auto sc = parse_number(trim(term.substr(star + 1)));
        if (!sc) fail("bad scale");
        m.scale = static_cast<std::uint8_t>(*sc);
        if (*sc != 1 && *sc != 2 && *sc != 4 && *sc != 8) fail("scale must be 1, 2, 4 or 8");
        m.has_index = true;
      } else if (looks_like_reg(term)) {
        if (neg) fail("register cannot be subtracted");
        if (!have_base) {
          m.base = reg(term);
          have_base = true;
        } else if (!m.has_index) {
          m.index = reg(term);
          m.has_index = true;
        } else {
          fail("too many registers in memory operand");
        }
      } else {
        auto v = parse_number(term);
        if (!v) fail("bad displacement '" + std::string(term) + "'");
        auto d = static_cast<std::int64_t>(*v);
        m.disp += neg ? -d : d;
      }
      if (j >= body.size()) break;
      neg = body[j] == '-';
      i = j + 1;
    }
    if (!have_base) fail("memory operand needs a base register");
    return m;
  }

  Addr target(std::string_view t, std::size_t index) {
    t = trim(t);
    if (is_ident(t)) {
      fixups_.push_back({index, std::string(t), line_, Fixup::Slot::Target});
      return 0;
    }
    auto v = parse_number(t);
    if (!v) fail("bad jump target '" + std::string(t) + "'");
    return *v;
  }

  void expect(const std::vector<std::string_view>& ops, std::size_t n, std::string_view mnem) {
    if (ops.size() != n)
      fail(std::string(mnem) + " expects " + std::to_string(n) + " operand(s), got " + std::to_string(ops.size()));
  }

  void instruction(std::string_view s) {
    std::size_t sp = 0;
    while (sp < s.size() && !std::isspace(static_cast<unsigned char>(s[sp]))) ++sp;
    auto mnem = s.substr(0, sp);
    auto ops = split_operands(trim(s.substr(sp)));
    Instruction in;
    auto dot = mnem.find('.');
    auto base_mnem = mnem.substr(0, dot);
    auto op = parse_opcode(base_mnem);
    if (!op) fail("unknown opcode '" + std::string(mnem) + "'");
    in.op = *op;
    if (dot != std::string_view::npos) {
      if (in.op != Opcode::LOAD && in.op != Opcode::STORE) fail("width suffix only allowed on LOAD/STORE");
      auto w = parse_number(mnem.substr(dot + 1));
      if (!w || (*w != 1 && *w != 2 && *w != 4 && *w != 8)) fail("width must be 1, 2, 4 or 8");
      in.width = static_cast<std::uint8_t>(*w);
    }
    const std::size_t index = prog_.instructions.size();
    switch (in.op) {
      case Opcode::MOVRI:
        expect(ops, 2, mnem);
        in.rd = reg(ops[0]);
        in.imm = imm(ops[1], index);
        in.src_imm = true;
        break;
      case Opcode::MOVRR:
        expect(ops, 2, mnem);
        in.rd = reg(ops[0]);
        in.rs = reg(ops[1]);
        break;
      case Opcode::LOAD:
        expect(ops, 2, mnem);
        in.rd = reg(ops[0]);
        in.mem = mem(ops[1]);
        break;
      case Opcode::STORE:
        expect(ops, 2, mnem);
        in.mem = mem(ops[0]);
        in.rs = reg(ops[1]);
        break;
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::AND:
      case Opcode::OR:
      case Opcode::XOR:
      case Opcode::SHL:
      case Opcode::SHR:
      case Opcode::CMP:
        expect(ops, 2, mnem);
        in.rd = reg(ops[0]);
        if (looks_like_reg(ops[1])) {
          in.rs = reg(ops[1]);
        } else {
          in.src_imm = true;
          in.imm = imm(ops[1], index);
        }
        break;
      case Opcode::JCC: {
        expect(ops, 2, mnem);
        auto c = parse_cond(trim(ops[0]));
        if (!c) fail("bad condition '" + std::string(ops[0]) + "'");
        in.cond = *c;
        in.target = target(ops[1], index);
        break;
      }
      case Opcode::JMP:
      case Opcode::CALL:
        expect(ops, 1, mnem);
        in.target = target(ops[0], index);
        break;
      case Opcode::JMPIND:
      case Opcode::CALLIND:
        expect(ops, 1, mnem);
        in.rs = reg(ops[0]);
        break;
      case Opcode::CMOV: {
        expect(ops, 3, mnem);
        auto c = parse_cond(trim(ops[0]));
        if (!c) fail("bad condition '" + std::string(ops[0]) + "'");
        in.cond = *c;
        in.rd = reg(ops[1]);
        in.rs = reg(ops[2]);
        break;
      }
      case Opcode::MEMCPY:
        expect(ops, 3, mnem);
        in.rd = reg(ops[0]);
        in.rs = reg(ops[1]);
        in.rc = reg(ops[2]);
        break;
      case Opcode::SYSCALL: {
        expect(ops, 1, mnem);
        auto k = parse_syscall(trim(ops[0]));
        if (!k) fail("unknown syscall '" + std::string(ops[0]) + "'");
        in.sys = *k;
        break;
      }
      case Opcode::RET:
      case Opcode::HALT:
        if (!ops.empty()) fail(std::string(mnem) + " takes no operands");
        break;
    }
    prog_.instructions.push_back(in);
  }

  void resolve() {
    for (const auto& f : fixups_) {
      auto it = prog_.labels.find(f.label);
      if (it == prog_.labels.end()) throw AssemblyError(f.line, "undefined label '" + f.label + "'");
      auto& in = prog_.instructions[f.index];
      if (f.slot == Fixup::Slot::Target) in.target = it->second;
      else in.imm = static_cast<std::int64_t>(it->second);
    }
    for (const auto& f : data_fixups_) {
      auto it = prog_.labels.find(f.label);
      if (it == prog_.labels.end()) throw AssemblyError(f.line, "undefined label '" + f.label + "'");
      for (int b = 0; b < 8; ++b)
        prog_.data[f.image].bytes[f.offset + b] = static_cast<std::uint8_t>(it->second >> (8 * b));
    }
    for (std::size_t i = 0; i < prog_.instructions.size(); ++i) {
      const auto& in = prog_.instructions[i];
      const bool direct = in.op == Opcode::JCC || in.op == Opcode::JMP || in.op == Opcode::CALL;
      if (direct && !prog_.valid_code_address(in.target))
        throw AssemblyError(0, "instruction " + std::to_string(i) + " jumps to invalid address");
    }
    if (entry_label_) {
      auto it = prog_.labels.find(*entry_label_);
      if (it == prog_.labels.end()) throw AssemblyError(entry_line_, "undefined label '" + *entry_label_ + "'");
      prog_.entry = it->second;
    } else if (!prog_.instructions.empty()) {
      prog_.entry = kCodeBase;
    }
    const Addr code_lo = kCodeBase, code_hi = std::max(prog_.code_end(), kCodeBase + 1);
    for (const auto& img : prog_.data) {
      const Addr lo = img.addr, hi = img.addr + img.bytes.size();
      if (lo < page_of(code_hi - 1) + kPageSize && hi > page_of(code_lo))
        throw AssemblyError(0, "data image overlaps the code region");
    }
  }

  std::string_view src_;
  Program prog_;
  std::vector<Fixup> fixups_;
  std::vector<DataFixup> data_fixups_;
  std::optional<std::string> entry_label_;
  int entry_line_ = 0;
  int line_ = 0;
};

}  // namespace

Program assemble(std::string_view source) { return Parser(source).run(); }

}  // namespace half
