// Consumer side of one record channel: resolves block headers to analysis
// blocks, gathers each block's entries (possibly across buffers) and runs
// its TaintOps against the shared shadow and the worker's register taint.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "half/instrumenter.hpp"
#include "half/record_channel.hpp"
#include "half/taint.hpp"

namespace half {

class WorkerFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WorkerCounters {
  std::uint64_t blocks_executed = 0;
  std::uint64_t headers = 0;
  std::uint64_t data_consumed = 0;
  std::uint64_t switches = 0;
  std::uint64_t ops_applied = 0;
  bool truncated = false;  // aborted stream ended inside a block
};

class AnalysisWorker {
 public:
  AnalysisWorker(ThreadId tid, RecordChannel& channel, const Instrumenter& code, MemoryTaint& mem,
                 TaskDispatcher& tasks);

  // Consumes events until EndOfStream (blocking). Throws WorkerFault on a
  // corrupted stream.
  void run();
  // Consumes available events without blocking, stopping early once the
  // channel has finished `until_generation` (if given). Returns true at
  // EndOfStream.
  bool pump(std::uint64_t until_generation = UINT64_MAX);
  // Feeds one event; exposed for tests that drive the state machine.
  void feed(const StreamEvent& ev);

  bool finished() const { return finished_; }
  ThreadId tid() const { return tid_; }
  const WorkerCounters& counters() const { return counters_; }
  RegisterTaint regs;

 private:
  void on_word(Word w);
  void execute();

  ThreadId tid_;
  RecordChannel& channel_;
  const Instrumenter& code_;
  MemoryTaint& mem_;
  TaskDispatcher& tasks_;
  const Instrumenter::Entry* cur_ = nullptr;
  std::vector<Word> entries_;
  bool finished_ = false;
  WorkerCounters counters_;
};

}  // namespace half
