#include "half/workloads.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <sstream>
#include <stdexcept>

#include "half/assembler.hpp"

namespace half {

namespace {

std::vector<std::uint8_t> pattern_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

const char* kDownloader = R"(; RECV chunks from the network, copy them byte by byte, FWRITE the copy.
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0            ; receive buffer
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r9, r0            ; output buffer
loop:
    MOVRR r1, r8
    MOVRI r2, 4096
    MOVRI r3, 0
    SYSCALL RECV
    CMP r0, 0
    JCC EQ, done
    MOVRR r5, r0
    MOVRI r4, 0
copy:
    LOAD.1 r6, [r8+r4]
    STORE.1 [r9+r4], r6
    ADD r4, 1
    CMP r4, r5
    JCC LT, copy
    MOVRR r1, r9
    MOVRR r2, r5
    SYSCALL FWRITE
    JMP loop
done:
    MOVRI r1, 0
    SYSCALL EXIT
)";

const char* kDownloaderMix = R"(; Like downloader, but every fourth byte is replaced by a clean constant
; and the rest pass through a dynamic shift pair.
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r9, r0
loop:
    MOVRR r1, r8
    MOVRI r2, 4096
    MOVRI r3, 0
    SYSCALL RECV
    CMP r0, 0
    JCC EQ, done
    MOVRR r5, r0
    MOVRI r4, 0
mix:
    LOAD.1 r6, [r8+r4]
    MOVRR r7, r4
    AND r7, 3
    MOVRI r10, 0x2a
    CMP r7, 0
    CMOV EQ, r6, r10
    MOVRR r11, r7
    SHL r6, r11
    SHR r6, r11
    XOR r12, r12
    OR r6, r12
    STORE.1 [r9+r4], r6
    ADD r4, 1
    CMP r4, r5
    JCC LT, mix
    MOVRR r1, r9
    MOVRR r2, r5
    SYSCALL FWRITE
    JMP loop
done:
    MOVRI r1, 0
    SYSCALL EXIT
)";

const char* kProducerConsumer = R"(; Strictly alternating hand-off through a shared buffer:
; producer RECVs a chunk and SIGNALs 1, consumer WAITs 1, copies, FWRITEs,
; SIGNALs 2.
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRI r1, @consumer
    MOVRR r2, r8
    SYSCALL SPAWN
produce:
    MOVRR r1, r8
    MOVRI r2, 512
    MOVRI r3, 0
    SYSCALL RECV
    MOVRR r5, r0
    STORE [r8+2048], r5
    MOVRI r1, 1
    SYSCALL SIGNAL
    CMP r5, 0
    JCC EQ, pdone
    MOVRI r1, 2
    SYSCALL WAIT
    JMP produce
pdone:
    MOVRI r1, 0
    SYSCALL EXIT
consumer:
    MOVRR r8, r1
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r9, r0
consume:
    MOVRI r1, 1
    SYSCALL WAIT
    LOAD r5, [r8+2048]
    CMP r5, 0
    JCC EQ, cdone
    MEMCPY r9, r8, r5
    MOVRR r1, r9
    MOVRR r2, r5
    SYSCALL FWRITE
    MOVRI r1, 2
    SYSCALL SIGNAL
    JMP consume
cdone:
    MOVRI r1, 0
    SYSCALL EXIT
)";

const char* kAdversarial = R"(; The signaler floods its record buffer before and after SIGNAL; the waiter
; returns from WAIT promptly and exits.
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRR r1, r8
    MOVRI r2, 64
    MOVRI r3, 0
    SYSCALL RECV
    MOVRI r1, @signaler
    MOVRR r2, r8
    SYSCALL SPAWN
    MOVRI r1, 1
    SYSCALL WAIT
    LOAD r2, [r8+16]
    STORE [r8+1024], r2
    MOVRR r1, r8
    ADD r1, 1024
    MOVRI r2, 8
    SYSCALL FWRITE
    MOVRI r1, 0
    SYSCALL EXIT
signaler:
    MOVRR r8, r1
    MOVRI r4, 0
flood:
    LOAD r2, [r8]
    STORE [r8+16], r2
    ADD r4, 1
    CMP r4, 2000
    JCC LT, flood
    MOVRI r1, 1
    SYSCALL SIGNAL
    MOVRI r4, 0
flood2:
    LOAD r2, [r8+8]
    STORE [r8+2048], r2
    ADD r4, 1
    CMP r4, 6000
    JCC LT, flood2
    MOVRI r1, 0
    SYSCALL EXIT
)";

const char* kHeapSpray = R"(; Sprays the heap, then maps its payload at a fixed address and "runs" it
; by writing the payload marker out.
.entry main
.data 0x20000 "PAYLOAD!"
main:
    MOVRI r4, 0
spray:
    MOVRI r1, 65536
    MOVRI r2, 0
    SYSCALL ALLOC
    ADD r4, 1
    CMP r4, 8
    JCC LT, spray
    MOVRI r1, 65536
    MOVRI r2, 0x24000000
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRI r5, 0x20000
    MOVRI r6, 8
    MEMCPY r8, r5, r6
    MOVRR r1, r8
    MOVRI r2, 8
    SYSCALL FWRITE
    MOVRI r1, 0
    SYSCALL EXIT
)";

const char* kBeacon = R"(; Receives a stage pointer and a configuration blob, logs the pointer, then
; calls through it.
.entry main
main:
    MOVRI r1, 4096
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRR r1, r8
    MOVRI r2, 8
    MOVRI r3, 0
    SYSCALL RECV
    MOVRR r1, r8
    ADD r1, 64
    MOVRI r2, 256
    MOVRI r3, 0
    SYSCALL RECV
    MOVRR r1, r8
    MOVRI r2, 8
    SYSCALL FWRITE          ; pre-jump check of the received pointer
    LOAD r5, [r8]
    CALLIND r5
    MOVRI r1, 0
    SYSCALL EXIT
stage2:
    MOVRI r4, 0
beacon:
    LOAD r6, [r8+64]
    ADD r6, r4
    STORE [r8+512], r6
    ADD r4, 1
    CMP r4, 20000
    JCC LT, beacon
    RET
)";

const char* kMembound = R"(; Streams over a 64 KiB array eight times: two recorded addresses per
; iteration keep the record channel busy.
.entry main
main:
    MOVRI r1, 65536
    MOVRI r2, 0
    SYSCALL ALLOC
    MOVRR r8, r0
    MOVRR r1, r8
    MOVRI r2, 4096
    MOVRI r3, 0
    SYSCALL RECV
    MOVRI r9, 0
pass:
    MOVRI r4, 0
inner:
    LOAD r2, [r8+r4]
    ADD r2, r9
    STORE [r8+r4], r2
    ADD r4, 8
    CMP r4, 65536
    JCC LT, inner
    ADD r9, 1
    CMP r9, 8
    JCC LT, pass
    MOVRR r1, r8
    MOVRI r2, 4096
    SYSCALL FWRITE
    MOVRI r1, 0
    SYSCALL EXIT
)";

std::string sparse_source() {
  std::ostringstream os;
  os << "; Maps " << kSparsePages << " single pages at 8 MiB strides across the span (skipping\n"
     << "; [0x20000000, 0x28000000)) and taints 16 bytes in each.\n"
     << ".entry main\n";
  std::vector<Addr> addrs;
  for (Addr a = 0x0200'0000; addrs.size() < kSparsePages; a += 0x80'0000)
    if (a < 0x2000'0000 || a >= 0x2800'0000) addrs.push_back(a);
  for (std::size_t i = 0; i < addrs.size(); i += 8) {
    os << ".quad 0x" << std::hex << (0x20000 + i * 8);
    for (std::size_t k = i; k < std::min(addrs.size(), i + 8); ++k) os << " 0x" << addrs[k];
    os << std::dec << "\n";
  }
  os << R"(main:
    MOVRI r10, 0x20000
    MOVRI r4, 0
touch:
    LOAD r2, [r10+r4*8]
    MOVRI r1, 4096
    SYSCALL ALLOC
    MOVRR r1, r0
    MOVRI r2, 16
    MOVRI r3, 0
    SYSCALL RECV
    ADD r4, 1
    CMP r4, )" << kSparsePages
     << R"(
    JCC LT, touch
    MOVRI r1, 0
    SYSCALL EXIT
)";
  return os.str();
}

Workload finish(Workload w) {
  w.program = assemble(w.source);
  if (w.bindings.syscalls.empty()) {
    auto sites = std::move(w.bindings.sites);
    const bool ind = w.bindings.indirect_checks;
    w.bindings = TaskBindings::defaults();
    w.bindings.sites = std::move(sites);
    w.bindings.indirect_checks = ind;
  }
  return w;
}

Workload beacon_workload() {
  Workload w;
  w.id = "beacon";
  w.description = "RECV a stage pointer, log it, CALLIND through it (tainted indirect target)";
  w.source = kBeacon;
  w = finish(std::move(w));
  const Addr stage2 = w.program.label("stage2");
  std::vector<std::uint8_t> in(8);
  for (int i = 0; i < 8; ++i) in[i] = static_cast<std::uint8_t>(stage2 >> (8 * i));
  auto blob = pattern_bytes(256, 7);
  in.insert(in.end(), blob.begin(), blob.end());
  w.setup.net_in = {in};
  return w;
}

// ---------------------------------------------------------------------------
// Random program generator.

class RandomGen {
 public:
  RandomGen(std::uint64_t seed, const RandomProgramLimits& lim) : rng_(seed), lim_(lim) {}

  Workload build(std::uint64_t seed) {
    threads_ = pick(1, lim_.max_threads);
    rounds_ = pick(1, 3);
    sources_left_ = pick(1, lim_.max_sources);
    sinks_left_ = pick(1, lim_.max_sinks);
    // Fixed prologue/epilogue cost per thread is about 25 instructions.
    const std::size_t overhead = 30 * threads_ + 12;
    per_thread_ = (lim_.max_instructions - std::min(overhead, lim_.max_instructions - 20)) / threads_;
    out_ << "; random program, seed " << seed << ", " << threads_ << " thread(s)\n.entry t0_entry\n";
    for (std::size_t t = 0; t < threads_; ++t) thread(t);
    Workload w;
    w.id = "random:" + std::to_string(seed);
    w.description = "generated program";
    w.source = out_.str();
    w.threads = threads_;
    w.program = assemble(w.source);
    w.bindings = TaskBindings::defaults();
    for (const auto& [label, spec] : site_labels_) w.bindings.sites[w.program.label(label)] = spec;
    w.setup.net_in = {pattern_bytes(1024, seed ^ 0x11)};
    w.setup.file_in = {pattern_bytes(1024, seed ^ 0x22)};
    if (w.program.size() > lim_.max_instructions)
      throw std::logic_error("generator exceeded the instruction budget");
    return w;
  }

 private:
  static constexpr Addr kShared = 0x0300'0000;
  static constexpr Addr kPrivate = 0x0400'0000;
  static constexpr Addr kRegion = 8192;

  std::size_t pick(std::size_t lo, std::size_t hi) { return lo + rng_() % (hi - lo + 1); }
  bool chance(unsigned pct) { return rng_() % 100 < pct; }
  int data_reg() {
    static constexpr int regs[] = {2, 3, 4, 5, 6, 7, 12, 13};
    return regs[rng_() % 8];
  }
  std::string r(int i) { return "r" + std::to_string(i); }
  std::string label(const std::string& stem) { return stem + "_" + std::to_string(label_id_++); }

  void ins(const std::string& s) {
    out_ << "    " << s << "\n";
    ++count_;
  }
  void lbl(const std::string& l) { out_ << l << ":\n"; }

  std::string base(bool shared) { return shared ? "r9" : "r8"; }

  // Offsets cluster in a small window so sources, copies and sinks overlap.
  Addr hot(Addr max_off) { return chance(75) ? pick(0, std::min<Addr>(64, max_off)) : pick(0, max_off); }

  void addr_into(int reg, bool shared, Addr max_off) {
    ins("MOVRR " + r(reg) + ", " + base(shared));
    ins("ADD " + r(reg) + ", " + std::to_string(hot(max_off)));
  }

  void simple_op(bool shared) {
    static constexpr const char* alu[] = {"ADD", "SUB", "AND", "OR", "XOR"};
    static constexpr const char* conds[] = {"EQ", "NE", "LT", "GE", "LE", "GT", "B", "AE"};
    static constexpr int widths[] = {1, 2, 4, 8};
    const bool use_shared = shared && chance(50);
    switch (rng_() % 12) {
      case 0: ins("MOVRI " + r(data_reg()) + ", " + std::to_string(rng_() % 100000)); break;
      case 1: ins("MOVRR " + r(data_reg()) + ", " + r(data_reg())); break;
      case 2: ins(std::string(alu[rng_() % 5]) + " " + r(data_reg()) + ", " + r(data_reg())); break;
      case 3: ins(std::string(alu[rng_() % 5]) + " " + r(data_reg()) + ", " + std::to_string(rng_() % 4096)); break;
      case 4: {
        const int d = data_reg();
        ins("XOR " + r(d) + ", " + r(d));
        break;
      }
      case 5:
        ins(std::string(chance(50) ? "SHL " : "SHR ") + r(data_reg()) + ", " +
            (chance(70) ? r(data_reg()) : std::to_string(rng_() % 64)));
        break;
      case 6:
        ins("CMP " + r(data_reg()) + ", " + r(data_reg()));
        ins(std::string("CMOV ") + conds[rng_() % 8] + ", " + r(data_reg()) + ", " + r(data_reg()));
        break;
      case 7:
      case 8: {
        const int w = widths[rng_() % 4];
        ins("LOAD." + std::to_string(w) + " " + r(data_reg()) + ", [" + base(use_shared) + "+" +
            std::to_string(hot(kRegion - 8)) + "]");
        break;
      }
      case 9:
      case 10: {
        const int w = widths[rng_() % 4];
        ins("STORE." + std::to_string(w) + " [" + base(use_shared) + "+" + std::to_string(hot(kRegion - 8)) +
            "], " + r(data_reg()));
        break;
      }
      case 11: {
        // Indexed access with a data-dependent, masked index.
        ins("MOVRR r10, " + r(data_reg()));
        ins("AND r10, 0xFF8");
        const std::string m = "[" + base(use_shared) + "+r10+" + std::to_string(hot(4000)) + "]";
        if (chance(50)) ins("LOAD " + r(data_reg()) + ", " + m);
        else ins("STORE " + m + ", " + r(data_reg()));
        break;
      }
    }
  }

  void memcpy_op(bool shared) {
    const std::size_t n = pick(0, 256);
    addr_into(11, shared && chance(50), kRegion - 256);
    addr_into(12, shared && chance(50), kRegion - 256);
    ins("MOVRI r13, " + std::to_string(n));
    ins("MEMCPY r11, r12, r13");
  }

  void source_op(bool shared) {
    --sources_left_;
    addr_into(1, shared && chance(50), kRegion - 64);
    ins("MOVRI r2, " + std::to_string(pick(16, 64)));
    ins("MOVRI r3, 0");
    ins(std::string("SYSCALL ") + (chance(60) ? "RECV" : "FREAD"));
  }

  void sink_op(bool shared) {
    --sinks_left_;
    if (chance(30)) {
      // Store site bound to a taint check.
      const std::string l = label("chk");
      site_labels_.emplace_back(l, TaskSpec{TaskKind::TaintCheck, 0, 0});
      out_ << l << ":\n";
      ins("STORE [" + base(shared && chance(50)) + "+" + std::to_string(hot(kRegion - 8)) + "], " +
          r(data_reg()));
      return;
    }
    addr_into(1, shared && chance(50), kRegion - 64);
    ins("MOVRI r2, " + std::to_string(pick(1, 64)));
    ins(std::string("SYSCALL ") + (chance(60) ? "FWRITE" : "SEND"));
  }

  void indirect_op(const std::string& sub) {
    // Zeroing and offsetting with immediates keeps the source register's taint.
    ins("MOVRR r10, " + r(data_reg()));
    ins("AND r10, 0");
    if (chance(50)) {
      ins("ADD r10, @" + sub);
      ins("CALLIND r10");
    } else {
      const std::string l = label("ij");
      ins("ADD r10, @" + l);
      ins("JMPIND r10");
      lbl(l);
    }
  }

  void loop(bool shared) {
    const std::string l = label("loop");
    ins("MOVRI r14, " + std::to_string(pick(1, 6)));
    lbl(l);
    const std::size_t body = pick(1, 5);
    for (std::size_t i = 0; i < body; ++i) {
      if (chance(15)) memcpy_op(shared);
      else simple_op(shared);
    }
    ins("SUB r14, 1");
    ins("CMP r14, 0");
    ins("JCC NE, " + l);
  }

  void chunk(bool shared, std::size_t budget, const std::string& sub) {
    const std::size_t stop = count_ + budget;
    if (sources_left_ > 0 && chance(70)) source_op(shared);
    while (count_ + 12 < stop) {
      const auto k = rng_() % 100;
      if (k < 50) simple_op(shared);
      else if (k < 60) memcpy_op(shared);
      else if (k < 70) loop(shared);
      else if (k < 76 && sources_left_ > 0) source_op(shared);
      else if (k < 82 && sinks_left_ > 0) sink_op(shared);
      else if (k < 88) indirect_op(sub);
      else if (k < 92) ins("CALL " + sub);
      else simple_op(shared);
    }
  }

  void thread(std::size_t t) {
    const std::string p = "t" + std::to_string(t);
    const std::string sub = p + "_sub";
    const std::size_t start = count_;
    lbl(p + "_entry");
    if (t == 0) {
      ins("MOVRI r1, " + std::to_string(kRegion));
      ins("MOVRI r2, " + std::to_string(kShared));
      ins("SYSCALL ALLOC");
    }
    ins("MOVRI r1, " + std::to_string(kRegion));
    ins("MOVRI r2, " + std::to_string(kPrivate + t * 0x10'0000));
    ins("SYSCALL ALLOC");
    ins("MOVRR r8, r0");
    ins("MOVRI r9, " + std::to_string(kShared));
    if (t == 0) {
      for (std::size_t k = 1; k < threads_; ++k) {
        ins("MOVRI r1, @t" + std::to_string(k) + "_entry");
        ins("MOVRI r2, 0");
        ins("SYSCALL SPAWN");
      }
      ins("MOVRI r1, 0");
      ins("SYSCALL SIGNAL");  // thread 0 holds the shared region first
    }
    for (int reg : {2, 3, 4, 5, 6, 7, 12, 13}) ins("MOVRI " + r(reg) + ", " + std::to_string(rng_() % 1000));
    ins("MOVRI r15, " + std::to_string(rounds_));
    const std::size_t body_budget = per_thread_ > (count_ - start) + 30 ? per_thread_ - (count_ - start) - 30 : 12;
    const std::size_t sub_budget = std::max<std::size_t>(4, body_budget / 8);
    const std::size_t private_budget = (body_budget - sub_budget) / 2;
    const std::size_t shared_budget = body_budget - sub_budget - private_budget;
    lbl(p + "_round");
    chunk(false, private_budget, sub);
    ins("MOVRI r1, " + std::to_string(t));
    ins("SYSCALL WAIT");
    chunk(true, shared_budget, sub);
    ins("MOVRI r1, " + std::to_string((t + 1) % threads_));
    ins("SYSCALL SIGNAL");
    ins("SUB r15, 1");
    ins("CMP r15, 0");
    ins("JCC NE, " + p + "_round");
    if (chance(50)) {
      ins("MOVRR r1, r8");
      ins("SYSCALL FREE");
    }
    ins("MOVRI r1, 0");
    ins("SYSCALL EXIT");
    // Subroutine: private region only, so callers inside the shared section
    // never race.
    lbl(sub);
    for (std::size_t i = 0; i < sub_budget; ++i) simple_op(false);
    ins("RET");
  }

  std::mt19937_64 rng_;
  RandomProgramLimits lim_;
  std::ostringstream out_;
  std::size_t count_ = 0;
  std::size_t label_id_ = 0;
  std::size_t threads_ = 1;
  std::size_t rounds_ = 1;
  std::size_t per_thread_ = 0;
  std::size_t sources_left_ = 0;
  std::size_t sinks_left_ = 0;
  std::vector<std::pair<std::string, TaskSpec>> site_labels_;
};

}  // namespace

std::vector<CatalogEntry> workload_catalog() {
  return {
      {"downloader", "10 KiB network download copied byte by byte to a file (source -> sink)"},
      {"downloader-mix", "download with a mixing transform: constant bytes, CMOV and dynamic shifts"},
      {"producer-consumer", "two threads handing 512-byte chunks through WAIT/SIGNAL"},
      {"adversarial", "signaler floods its buffer around SIGNAL while the waiter returns promptly"},
      {"heap-spray", "heap spray then a fixed-address ALLOC at 0x24000000 holding the payload"},
      {"beacon", "RECV a stage pointer and CALLIND through it"},
      {"membound", "eight passes over a 64 KiB array (record-channel stress)"},
      {"sparse", "100 single pages spread across the 1 GiB span"},
      {"random:<seed>", "generated multi-threaded program for oracle fuzzing"},
  };
}

std::size_t count_spawns(const Program& p) {
  return static_cast<std::size_t>(std::count_if(p.instructions.begin(), p.instructions.end(), [](const Instruction& in) {
    return in.op == Opcode::SYSCALL && in.sys == SyscallKind::SPAWN;
  }));
}

Workload generate_random_workload(std::uint64_t seed, const RandomProgramLimits& limits) {
  return RandomGen(seed, limits).build(seed);
}

Workload make_workload(const std::string& id) {
  if (id.rfind("random:", 0) == 0) {
    const std::string s = id.substr(7);
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw std::invalid_argument("bad random workload seed '" + s + "'");
    return generate_random_workload(seed);
  }
  Workload w;
  w.id = id;
  for (const auto& c : workload_catalog())
    if (c.id == id) w.description = c.description;
  if (id == "downloader") {
    w.source = kDownloader;
    w.setup.net_in = {pattern_bytes(10240, 1)};
  } else if (id == "downloader-mix") {
    w.source = kDownloaderMix;
    w.setup.net_in = {pattern_bytes(10240, 2)};
  } else if (id == "producer-consumer") {
    w.source = kProducerConsumer;
    w.threads = 2;
    w.setup.net_in = {pattern_bytes(8192, 3)};
  } else if (id == "adversarial") {
    w.source = kAdversarial;
    w.threads = 2;
    w.setup.net_in = {pattern_bytes(64, 4)};
  } else if (id == "heap-spray") {
    w.source = kHeapSpray;
    w.payload_marker = "PAYLOAD!";
  } else if (id == "beacon") {
    return beacon_workload();
  } else if (id == "membound") {
    w.source = kMembound;
    w.setup.net_in = {pattern_bytes(4096, 5)};
  } else if (id == "sparse") {
    w.source = sparse_source();
    w.setup.net_in = {pattern_bytes(16 * kSparsePages, 6)};
  } else {
    std::string valid;
    for (const auto& c : workload_catalog()) valid += (valid.empty() ? "" : ", ") + c.id;
    throw std::invalid_argument("unknown workload '" + id + "'; valid ids: " + valid);
  }
  return finish(std::move(w));
}

}  // namespace half
