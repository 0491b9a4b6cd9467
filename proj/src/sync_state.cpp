#include "half/sync_state.hpp"

#include <algorithm>

namespace half {

double compute_gsr(std::uint64_t cfn, std::uint64_t dfn) {
  if (cfn == 0) return 1.0;
  return double(cfn - std::min(dfn, cfn)) / double(cfn);
}

void SyncState::register_thread(ThreadId tid, RecordChannel& channel) {
  std::lock_guard lk(mu_);
  channels_[tid] = &channel;
}

bool SyncState::processed(const FlaggedBuffer& f) const {
  return channels_.at(f.tid)->finished_generations() > f.generation;
}

void SyncState::on_signal(ThreadId tid) {
  RecordChannel* ch;
  {
    std::lock_guard lk(mu_);
    ++c_.ssn;
    ch = channels_.at(tid);
  }
  const std::uint64_t gen = ch->producer_generation();
  bool flagged = false;
  if (sync_submit_) flagged = ch->submit_current(SubmitReason::SyncSignal);
  else flagged = !ch->producer_empty();  // the live buffer carries the flag until it fills
  if (!flagged) return;
  std::lock_guard lk(mu_);
  const FlaggedBuffer f{tid, gen};
  if (std::find(flags_.begin(), flags_.end(), f) == flags_.end()) flags_.push_back(f);
}

void SyncState::on_wait(ThreadId tid) {
  RecordChannel* ch;
  {
    std::lock_guard lk(mu_);
    ++c_.wsn;
    ch = channels_.at(tid);
  }
  if (sync_submit_) ch->submit_current(SubmitReason::SyncWait);
  const std::uint64_t key = ch->producer_generation();
  std::lock_guard lk(mu_);
  std::erase_if(flags_, [&](const FlaggedBuffer& f) { return processed(f); });
  auto& list = detection_[tid];
  for (const auto& f : flags_) {
    if (f.tid == tid) continue;
    list.push_back(Checkpoint{key, f});
    ++c_.cfn;
  }
}

void SyncState::on_begin(ThreadId tid, std::uint64_t gen) {
  std::lock_guard lk(mu_);
  auto it = detection_.find(tid);
  if (it == detection_.end()) return;
  std::erase_if(it->second, [&](const Checkpoint& c) {
    if (c.key > gen) return false;
    if (!processed(c.flag)) ++c_.dfn;
    return true;
  });
}

SyncCounters SyncState::counters() const {
  std::lock_guard lk(mu_);
  return c_;
}

double SyncState::gsr() const {
  const auto c = counters();
  return compute_gsr(c.cfn, c.dfn);
}

std::vector<FlaggedBuffer> SyncState::outstanding_flags() const {
  std::lock_guard lk(mu_);
  std::vector<FlaggedBuffer> out;
  for (const auto& f : flags_)
    if (!processed(f)) out.push_back(f);
  return out;
}

std::vector<FlaggedBuffer> SyncState::detection_list(ThreadId tid) const {
  std::lock_guard lk(mu_);
  std::vector<FlaggedBuffer> out;
  if (auto it = detection_.find(tid); it != detection_.end())
    for (const auto& c : it->second) out.push_back(c.flag);
  return out;
}

}  // namespace half
