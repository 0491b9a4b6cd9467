#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "half/assembler.hpp"
#include "half/vm.hpp"

using namespace half;

namespace {

struct NoHooks : ExecHooks {};

// Independent reference for the ALU: carries and overflow via 128-bit math.
struct RefAlu {
  Word value = 0;
  bool z = false, s = false, c = false, o = false;
};

RefAlu ref_alu(Opcode op, Word a, Word b) {
  RefAlu r;
  using i128 = __int128;
  using u128 = unsigned __int128;
  switch (op) {
    case Opcode::ADD: {
      const u128 wide = u128(a) + u128(b);
      r.value = Word(wide);
      r.c = (wide >> 64) != 0;
      const i128 sw = i128(std::int64_t(a)) + i128(std::int64_t(b));
      r.o = sw != i128(std::int64_t(r.value));
      break;
    }
    case Opcode::SUB:
    case Opcode::CMP: {
      r.value = a - b;
      r.c = a < b;
      const i128 sw = i128(std::int64_t(a)) - i128(std::int64_t(b));
      r.o = sw != i128(std::int64_t(r.value));
      break;
    }
    case Opcode::AND: r.value = a & b; break;
    case Opcode::OR: r.value = a | b; break;
    case Opcode::XOR: r.value = a ^ b; break;
    case Opcode::SHL: r.value = a << (b % 64); break;
    case Opcode::SHR: r.value = a >> (b % 64); break;
    default: break;
  }
  r.z = r.value == 0;
  r.s = std::int64_t(r.value) < 0;
  return r;
}

bool ref_cond(Cond c, const Flags& f) {
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

Word interesting(std::mt19937_64& rng) {
  static const Word edge[] = {0, 1, 2, 63, 64, 0x7FFF'FFFF'FFFF'FFFFULL, 0x8000'0000'0000'0000ULL, ~0ULL, 0xFF};
  return rng() % 3 == 0 ? edge[rng() % std::size(edge)] : rng();
}

}  // namespace

TEST_CASE("assemble: documented examples") {
  SUBCASE("empty text has no instructions and no entry") {
    Program p = assemble("");
    CHECK(p.size() == 0);
    CHECK_FALSE(p.entry.has_value());
    World w;
    NoHooks h;
    Vm vm(p, w, h);
    auto out = vm.run();
    CHECK(out.status == RunStatus::Fault);
    CHECK(out.fault == FaultKind::NoEntry);
  }
  SUBCASE("two instructions, entry at the first") {
    Program p = assemble("MOVRI r1, 5\nHALT");
    CHECK(p.size() == 2);
    REQUIRE(p.entry.has_value());
    CHECK(*p.entry == kCodeBase);
  }
  SUBCASE("undefined label") { CHECK_THROWS_AS(assemble("JMP nowhere"), AssemblyError); }
  SUBCASE("duplicate label") { CHECK_THROWS_AS(assemble("a:\nHALT\na:\nHALT"), AssemblyError); }
  SUBCASE("syntax error carries its line") {
    try {
      assemble("MOVRI r1, 5\nMOVRI r99, 1\n");
      FAIL("expected an error");
    } catch (const AssemblyError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("bad scale is rejected") { CHECK_THROWS(assemble("LOAD r1, [r2+r3*3]")); }
  SUBCASE("labels, data and quad directives") {
    Program p = assemble(".entry go\n.data 0x20000 \"hi\"\n.quad 0x20008 @go 7\nHALT\ngo: HALT\n");
    CHECK(*p.entry == kCodeBase + kCodeStride);
    REQUIRE(p.data.size() == 2);
    CHECK(p.data[0].bytes == std::vector<std::uint8_t>{'h', 'i'});
    CHECK(p.data[1].bytes.size() == 16);
    CHECK(p.data[1].bytes[0] == static_cast<std::uint8_t>(kCodeBase + kCodeStride));
  }
}

TEST_CASE("isa: operand-class predicates") {
  int mem = 0, count = 0, flags = 0, target = 0;
  for (int i = 0; i < kNumOpcodes; ++i) {
    const auto op = static_cast<Opcode>(i);
    mem += references_memory(op);
    flags += reads_flags(op);
    target += register_target(op);
    Instruction in;
    in.op = op;
    in.src_imm = false;
    count += has_dynamic_count(in);
  }
  CHECK(mem == 3);
  CHECK(flags == 2);
  CHECK(target == 2);
  CHECK(count == 2);
  CHECK(references_memory(Opcode::MEMCPY));
  CHECK(reads_flags(Opcode::CMOV));
  CHECK(register_target(Opcode::CALLIND));
}

TEST_CASE("step: documented examples") {
  NoHooks h;
  SUBCASE("MOVRI") {
    Program p = assemble("MOVRI r1, 5\nHALT");
    TargetMemory m;
    MachineState st;
    st.pc = kCodeBase;
    auto out = step(st, p, m, h);
    CHECK(out.kind == StepKind::Continue);
    CHECK(st.regs[1] == 5);
    CHECK(st.pc == kCodeBase + kCodeStride);
  }
  SUBCASE("LOAD with displacement") {
    Program p = assemble("LOAD r2, [r1+8]\nHALT");
    TargetMemory m;
    m.commit(0x1000);
    m.store(0x1008, 7, 8);
    MachineState st;
    st.pc = kCodeBase;
    st.regs[1] = 0x1000;
    step(st, p, m, h);
    CHECK(st.regs[2] == 7);
  }
  SUBCASE("STORE to an uncommitted page faults") {
    Program p = assemble("STORE [r1], r2\nHALT");
    TargetMemory m;
    MachineState st;
    st.pc = kCodeBase;
    st.regs[1] = 0x9000;
    auto out = step(st, p, m, h);
    CHECK(out.kind == StepKind::Fault);
    CHECK(out.fault == FaultKind::UnmappedMemory);
  }
  SUBCASE("RET on an empty stack faults") {
    Program p = assemble("RET");
    TargetMemory m;
    MachineState st;
    st.pc = kCodeBase;
    CHECK(step(st, p, m, h).fault == FaultKind::StackUnderflow);
  }
  SUBCASE("jump to a non-code address faults") {
    Program p = assemble("JMPIND r1");
    TargetMemory m;
    MachineState st;
    st.pc = kCodeBase;
    st.regs[1] = 0x5000;
    CHECK(step(st, p, m, h).fault == FaultKind::BadJumpTarget);
  }
}

TEST_CASE("step: ALU, CMP, CMOV and JCC match the reference over random operands") {
  std::mt19937_64 rng(0xA1);
  const Opcode ops[] = {Opcode::ADD, Opcode::SUB, Opcode::AND, Opcode::OR,
                        Opcode::XOR, Opcode::SHL, Opcode::SHR, Opcode::CMP};
  NoHooks h;
  TargetMemory m;
  for (int iter = 0; iter < 20000; ++iter) {
    const Opcode op = ops[rng() % std::size(ops)];
    const bool imm = rng() % 4 == 0;
    Program p;
    Instruction in;
    in.op = op;
    in.rd = 3;
    in.rs = 4;
    in.src_imm = imm;
    const Word a = interesting(rng);
    const Word b = interesting(rng);
    in.imm = static_cast<std::int64_t>(b);
    p.instructions = {in};
    MachineState st;
    st.pc = kCodeBase;
    st.regs[3] = a;
    st.regs[4] = b;
    REQUIRE(step(st, p, m, h).kind == StepKind::Continue);
    const auto ref = ref_alu(op, a, b);
    if (op != Opcode::CMP) CHECK(st.regs[3] == ref.value);
    else CHECK(st.regs[3] == a);
    CHECK(st.flags.z == ref.z);
    CHECK(st.flags.s == ref.s);
    const bool arith = op == Opcode::ADD || op == Opcode::SUB || op == Opcode::CMP;
    CHECK(st.flags.c == (arith && ref.c));
    CHECK(st.flags.o == (arith && ref.o));

    // Every condition against the flags just produced.
    for (int c = 0; c < 8; ++c) {
      Program q;
      Instruction cm;
      cm.op = Opcode::CMOV;
      cm.cond = static_cast<Cond>(c);
      cm.rd = 5;
      cm.rs = 6;
      q.instructions = {cm};
      MachineState s2 = st;
      s2.pc = kCodeBase;
      s2.regs[5] = 1;
      s2.regs[6] = 2;
      step(s2, q, m, h);
      CHECK(s2.regs[5] == (ref_cond(cm.cond, st.flags) ? 2u : 1u));
    }
  }
}

TEST_CASE("step: MEMCPY copies forward byte by byte") {
  NoHooks h;
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 500; ++iter) {
    TargetMemory m;
    m.commit(0x10000);
    m.commit(0x11000);
    std::vector<std::uint8_t> ref(8192);
    for (Addr i = 0; i < 8192; ++i) {
      ref[i] = static_cast<std::uint8_t>(rng());
      m.store(0x10000 + i, ref[i], 1);
    }
    const Addr src = rng() % 4096, dst = rng() % 4096, n = rng() % 4096;
    for (Addr i = 0; i < n; ++i) ref[dst + i] = ref[src + i];
    Program p = assemble("MEMCPY r1, r2, r3\nHALT");
    MachineState st;
    st.pc = kCodeBase;
    st.regs[1] = 0x10000 + dst;
    st.regs[2] = 0x10000 + src;
    st.regs[3] = n;
    REQUIRE(step(st, p, m, h).kind == StepKind::Continue);
    bool same = true;
    for (Addr i = 0; i < 8192; ++i) same &= m.load(0x10000 + i, 1) == ref[i];
    CHECK(same);
  }
}

TEST_CASE("exec_syscall: ALLOC, fixed conflicts, RECV, events") {
  SUBCASE("ALLOC returns a fresh aligned address") {
    World w;
    w.load(assemble("HALT"));
    MachineState st;
    st.regs[1] = 4096;
    auto r = exec_syscall(st, SyscallKind::ALLOC, w);
    CHECK(r.status == SyscallStatus::Done);
    CHECK(st.regs[0] % kPageSize == 0);
    CHECK(w.memory.committed(st.regs[0]));
    MachineState st2;
    st2.regs[1] = 4096;
    exec_syscall(st2, SyscallKind::ALLOC, w);
    CHECK(st2.regs[0] != st.regs[0]);
  }
  SUBCASE("fixed ALLOC over a reservation conflicts") {
    World w;
    w.reserve(0x2000'0000, 0x1000, "shadow");
    MachineState st;
    st.regs[1] = 4096;
    st.regs[2] = 0x2000'0000;
    try {
      exec_syscall(st, SyscallKind::ALLOC, w);
      FAIL("expected AddressConflict");
    } catch (const VmFault& f) {
      CHECK(f.kind() == FaultKind::AddressConflict);
    }
  }
  SUBCASE("fixed ALLOC without a reservation succeeds") {
    World w;
    MachineState st;
    st.regs[1] = 4096;
    st.regs[2] = 0x2000'0000;
    exec_syscall(st, SyscallKind::ALLOC, w);
    CHECK(st.regs[0] == 0x2000'0000);
  }
  SUBCASE("ALLOC of size 0 is invalid") {
    World w;
    MachineState st;
    st.regs[1] = 0;
    CHECK_THROWS_AS(exec_syscall(st, SyscallKind::ALLOC, w), VmFault);
  }
  SUBCASE("RECV copies input bytes and returns 0 at end of stream") {
    World w;
    std::vector<std::uint8_t> in(64);
    for (int i = 0; i < 64; ++i) in[i] = static_cast<std::uint8_t>(i * 3);
    w.net_in = {in};
    w.memory.commit(0x5000);
    MachineState st;
    st.regs[1] = 0x5000;
    st.regs[2] = 64;
    st.regs[3] = 0;
    auto r = exec_syscall(st, SyscallKind::RECV, w);
    CHECK(st.regs[0] == 64);
    CHECK(r.effect.addr == 0x5000);
    CHECK(r.effect.len == 64);
    for (int i = 0; i < 64; ++i) CHECK(w.memory.load(0x5000 + i, 1) == in[i]);
    exec_syscall(st, SyscallKind::RECV, w);
    CHECK(st.regs[0] == 0);
  }
  SUBCASE("events out of range are invalid") {
    World w;
    MachineState st;
    st.regs[1] = 99;
    CHECK_THROWS_AS(exec_syscall(st, SyscallKind::SIGNAL, w), VmFault);
  }
}

namespace {

const char* kHandoff = R"(
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRI r1, @child
    MOVRR r2, r8
    SYSCALL SPAWN
    MOVRI r4, 0
spin:
    ADD r4, 1
    CMP r4, 300
    JCC LT, spin
    MOVRI r5, 0xBEEF
    STORE [r8+8], r5
    MOVRI r1, 3
    SYSCALL SIGNAL
    MOVRI r1, 0
    SYSCALL EXIT
child:
    MOVRR r8, r1
    MOVRI r1, 3
    SYSCALL WAIT
    LOAD r6, [r8+8]
    STORE [r8+16], r6
    MOVRI r1, 0
    SYSCALL EXIT
)";

}  // namespace

TEST_CASE("vm: SIGNAL/WAIT order memory across threads for every seed") {
  Program p = assemble(kHandoff);
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    World w;
    w.load(p);
    NoHooks h;
    VmConfig cfg;
    cfg.seed = seed;
    Vm vm(p, w, h, cfg);
    auto out = vm.run();
    REQUIRE(out.status == RunStatus::Ok);
    CHECK(vm.threads().at(1).state.regs[6] == 0xBEEF);
    CHECK(vm.signals() == 1);
    CHECK(vm.waits() == 1);
  }
}

TEST_CASE("vm: fixed seed and inputs give identical final states") {
  Program p = assemble(kHandoff);
  auto run = [&](std::uint64_t seed) {
    World w;
    w.load(p);
    NoHooks h;
    VmConfig cfg;
    cfg.seed = seed;
    Vm vm(p, w, h, cfg);
    vm.run();
    std::vector<std::array<Word, kNumRegs>> regs;
    for (const auto& t : vm.threads()) regs.push_back(t.state.regs);
    return std::make_pair(regs, vm.steps());
  };
  CHECK(run(11) == run(11));
  CHECK(run(12) == run(12));
}

TEST_CASE("vm: deadlock is reported") {
  Program p = assemble("MOVRI r1, 2\nSYSCALL WAIT\nHALT");
  World w;
  w.load(p);
  NoHooks h;
  Vm vm(p, w, h);
  auto out = vm.run();
  CHECK(out.status == RunStatus::Fault);
  CHECK(out.fault == FaultKind::Deadlock);
}

TEST_CASE("vm: step limit") {
  Program p = assemble("top: JMP top");
  World w;
  w.load(p);
  NoHooks h;
  VmConfig cfg;
  cfg.max_steps = 1000;
  Vm vm(p, w, h, cfg);
  CHECK(vm.run().status == RunStatus::StepLimit);
}
