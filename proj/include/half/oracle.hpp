// Coupled reference: the same VM and the same generated TaintOps, applied
// inline as each instruction runs, over a flat address->label map.

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "half/instrumenter.hpp"
#include "half/taint.hpp"
#include "half/vm.hpp"
#include "half/world.hpp"

namespace half {

class FlatTaint : public MemoryTaint {
 public:
  void read(Addr addr, std::span<TaintLabel> out) override;
  void write(Addr addr, std::span<const TaintLabel> labels) override;
  std::map<Addr, TaintLabel> nonzero() const;

 private:
  std::unordered_map<Addr, TaintLabel> map_;
};

struct TaintGroundTruth {
  RunOutcome outcome;
  std::map<Addr, TaintLabel> shadow;  // nonzero labels only
  std::vector<RegisterTaint> regs;    // per thread
  std::uint64_t rb = 0, cb = 0, db = 0;
  std::vector<Alert> alerts;          // sorted
};

struct WorldSetup {
  WorldConfig world;
  std::vector<std::vector<std::uint8_t>> net_in;
  std::vector<std::vector<std::uint8_t>> file_in;
  bool prealloc = false;  // reserve the prealloc shadow region in the target
  Addr prealloc_base = 0x2000'0000;
};

// Builds and loads the world; throws VmFault(AddressConflict) if the
// prealloc reservation collides with the image.
void prepare_world(World& w, const Program& program, const WorldSetup& setup);

class CoupledHooks : public ExecHooks {
 public:
  CoupledHooks(const Program& program, const TaskBindings& bindings);

  void before_instruction(const MachineState& st, const Instruction& in) override;
  void after_syscall(const MachineState& st, const Instruction& in, const SyscallEffect& eff) override;
  void on_thread_start(ThreadId tid) override;

  TaintGroundTruth truth(const RunOutcome& outcome) const;
  FlatTaint mem;
  TaskDispatcher tasks;
  Instrumenter code;

 private:
  struct ThreadRec {
    RegisterTaint regs;
    const Instrumenter::Entry* block = nullptr;
    std::size_t next = 0;
    std::vector<Word> entries;
  };
  void apply(ThreadRec& t, ThreadId tid, std::size_t instr);

  std::vector<ThreadRec> threads_;
};

TaintGroundTruth run_coupled(const Program& program, const WorldSetup& setup, const TaskBindings& bindings,
                             std::uint64_t seed, std::uint64_t throttle = 0);

struct Diff {
  bool empty = true;
  std::string first;  // description of the first divergence
  std::size_t count = 0;
  explicit operator bool() const { return !empty; }
};

Diff compare(const TaintGroundTruth& truth, const TaintGroundTruth& observed);

}  // namespace half
