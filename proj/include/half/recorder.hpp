// Target-side instrumentation for the decoupled run: writes block headers and
// captures into each thread's record channel, forwards sync points to the
// SyncState and mirrors ALLOC/FREE into shadow memory.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "half/instrumenter.hpp"
#include "half/machine.hpp"
#include "half/record_channel.hpp"
#include "half/shadow_memory.hpp"
#include "half/sync_state.hpp"

namespace half {

struct RecorderCallbacks {
  std::function<void(ThreadId, RecordChannel&)> thread_started;
  std::function<void()> quantum_end;
  std::function<bool()> should_stop;
};

class Recorder : public ExecHooks {
 public:
  Recorder(Instrumenter& code, ShadowMemory& shadow, SyncState& sync, ChannelConfig channel_cfg,
           RecorderCallbacks callbacks = {});

  void before_instruction(const MachineState& st, const Instruction& in) override;
  void after_syscall(const MachineState& st, const Instruction& in, const SyscallEffect& eff) override;
  void on_thread_start(ThreadId tid) override;
  void on_thread_exit(ThreadId tid, bool aborted) override;
  void on_signal(ThreadId tid) override;
  void on_wait_return(ThreadId tid) override;
  void on_alloc(ThreadId tid, Addr base, std::uint64_t size) override;
  void on_free(ThreadId tid, Addr base, std::uint64_t size) override;
  void on_quantum_end() override;
  bool should_stop() override;

  RecordChannel& channel(ThreadId tid) { return *threads_.at(tid).channel; }
  std::size_t thread_count() const { return threads_.size(); }

 private:
  struct ThreadRec {
    std::unique_ptr<RecordChannel> channel;
    const Instrumenter::Entry* block = nullptr;
    std::size_t next = 0;
  };
  void emit(ThreadRec& t, Word w);

  Instrumenter& code_;
  ShadowMemory& shadow_;
  SyncState& sync_;
  ChannelConfig channel_cfg_;
  RecorderCallbacks cb_;
  std::vector<ThreadRec> threads_;
};

}  // namespace half
