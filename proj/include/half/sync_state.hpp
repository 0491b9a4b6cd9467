// Sync-aware submission at SIGNAL/WAIT and the flagged-buffer bookkeeping
// behind WSN, SSN, CFN, DFN and GSR.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

#include "half/record_channel.hpp"

namespace half {

struct FlaggedBuffer {
  ThreadId tid = 0;
  std::uint64_t generation = 0;
  friend bool operator==(const FlaggedBuffer&, const FlaggedBuffer&) = default;
};

struct SyncCounters {
  std::uint64_t wsn = 0;
  std::uint64_t ssn = 0;
  std::uint64_t cfn = 0;
  std::uint64_t dfn = 0;
};

double compute_gsr(std::uint64_t cfn, std::uint64_t dfn);

class SyncState {
 public:
  explicit SyncState(bool sync_submit = true) : sync_submit_(sync_submit) {}

  void register_thread(ThreadId tid, RecordChannel& channel);

  // SIGNAL hook, before the event is set.
  void on_signal(ThreadId tid);
  // WAIT hook.
  void on_wait(ThreadId tid);
  // Analysis side: the consumer of tid begins generation `gen`.
  void on_begin(ThreadId tid, std::uint64_t gen);

  SyncCounters counters() const;
  double gsr() const;
  std::vector<FlaggedBuffer> outstanding_flags() const;
  std::vector<FlaggedBuffer> detection_list(ThreadId tid) const;
  bool sync_submit() const { return sync_submit_; }

 private:
  bool processed(const FlaggedBuffer& f) const;

  bool sync_submit_;
  mutable std::mutex mu_;
  std::map<ThreadId, RecordChannel*> channels_;
  std::vector<FlaggedBuffer> flags_;
  struct Checkpoint {
    std::uint64_t key = 0;  // generation of the first post-wait buffer
    FlaggedBuffer flag;
  };
  std::map<ThreadId, std::vector<Checkpoint>> detection_;
  SyncCounters c_;
};

}  // namespace half
