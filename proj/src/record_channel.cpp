#include "half/record_channel.hpp"

#include <stdexcept>
#include <string>

namespace half {

void validate(const ChannelConfig& cfg) {
  if (cfg.n_buffers < 2) throw std::invalid_argument("channel needs at least 2 buffers");
  if (cfg.guard < 1) throw std::invalid_argument("guard must be at least 1 slot");
  if (cfg.capacity <= cfg.guard) throw std::invalid_argument("capacity must exceed the guard");
}

std::string_view to_string(SubmitReason r) {
  switch (r) {
    case SubmitReason::Full: return "Full";
    case SubmitReason::SyncWait: return "SyncWait";
    case SubmitReason::SyncSignal: return "SyncSignal";
    case SubmitReason::ThreadExit: return "ThreadExit";
  }
  return "?";
}

RecordChannel::RecordChannel(ChannelConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  buffers_.resize(cfg_.n_buffers);
  for (std::uint32_t i = 0; i < buffers_.size(); ++i) {
    buffers_[i].id = i;
    buffers_[i].entries.resize(cfg_.capacity);
    free_list_.push_back(i);
  }
  std::unique_lock lk(mu_);
  acquire_free(lk);
}

void RecordChannel::set_state(RecordBuffer& b, BufferState from, BufferState to) {
  if (b.state != from) throw std::logic_error("record buffer " + std::to_string(b.id) + " in unexpected state");
  b.state = to;
}

void RecordChannel::acquire_free(std::unique_lock<std::mutex>& lk) {
  while (free_list_.empty()) {
    if (starvation_) {
      lk.unlock();
      starvation_();
      lk.lock();
      if (free_list_.empty()) throw std::logic_error("record channel starved: no buffer was released");
    } else {
      cv_free_.wait(lk);
    }
  }
  const auto id = free_list_.front();
  free_list_.pop_front();
  auto& b = buffers_[id];
  set_state(b, BufferState::Free, BufferState::Producer);
  b.write_pos = 0;
  producer_ = static_cast<int>(id);
}

void RecordChannel::submit_locked(std::unique_lock<std::mutex>&, SubmitReason reason, bool terminal) {
  auto& b = buffers_[producer_];
  b.length = b.write_pos;
  b.reason = reason;
  b.signal_flag = reason == SubmitReason::SyncSignal;
  b.terminal = terminal;
  b.generation = next_generation_++;
  if (reason == SubmitReason::Full) ++bf_;
  ++by_reason_[static_cast<std::size_t>(reason)];
  producer_ = -1;
  if (on_submit_) on_submit_(SubmitInfo{b.generation, reason, b.signal_flag, b.length});
  if (cfg_.discard_on_submit) {
    set_state(b, BufferState::Producer, BufferState::Free);
    b.signal_flag = false;
    free_list_.push_back(b.id);
    finished_.fetch_add(1, std::memory_order_release);
    return;
  }
  set_state(b, BufferState::Producer, BufferState::Work);
  work_list_.push_back(b.id);
  cv_work_.notify_one();
}

WriteOutcome RecordChannel::write(Word value) {
  if (in_reserved_range(value)) throw std::invalid_argument("word in the reserved sentinel range");
  std::unique_lock lk(mu_);
  if (closed_) throw std::logic_error("write to a closed channel");
  WriteOutcome out = WriteOutcome::Ok;
  if (buffers_[producer_].write_pos >= usable_capacity()) {
    submit_locked(lk, SubmitReason::Full, false);
    acquire_free(lk);
    out = WriteOutcome::SwitchedThenOk;
  }
  auto& b = buffers_[producer_];
  b.entries[b.write_pos++] = value;
  ++words_;
  return out;
}

bool RecordChannel::submit_current(SubmitReason reason) {
  if (reason == SubmitReason::ThreadExit) {
    const bool nonempty = !producer_empty();
    close(false);
    return nonempty;
  }
  std::unique_lock lk(mu_);
  if (closed_ || buffers_[producer_].write_pos == 0) return false;
  auto& b = buffers_[producer_];
  b.entries[b.write_pos++] = kEarlySwitch;
  submit_locked(lk, reason, false);
  acquire_free(lk);
  return true;
}

void RecordChannel::close(bool aborted) {
  std::unique_lock lk(mu_);
  if (closed_) return;
  if (aborted) aborted_.store(true);
  if (buffers_[producer_].write_pos > 0) {
    auto& b = buffers_[producer_];
    b.entries[b.write_pos++] = kEarlySwitch;
    submit_locked(lk, SubmitReason::ThreadExit, false);
    acquire_free(lk);
  }
  submit_locked(lk, SubmitReason::ThreadExit, true);
  closed_ = true;
}

bool RecordChannel::producer_empty() const {
  std::lock_guard lk(mu_);
  return producer_ < 0 || buffers_[producer_].write_pos == 0;
}

void RecordChannel::release_consumer_locked() {
  auto& b = buffers_[consumer_];
  set_state(b, BufferState::Consumer, BufferState::Free);
  b.write_pos = 0;
  b.length = 0;
  b.signal_flag = false;
  free_list_.push_back(b.id);
  consumer_ = -1;
  finished_.fetch_add(1, std::memory_order_release);
  cv_free_.notify_one();
}

std::optional<StreamEvent> RecordChannel::next_impl(bool block) {
  std::unique_lock lk(mu_);
  for (;;) {
    if (at_end_) return StreamEvent{EventKind::EndOfStream, 0};
    if (consumer_ < 0) {
      if (work_list_.empty()) {
        if (!block) return std::nullopt;
        cv_work_.wait(lk, [&] { return !work_list_.empty(); });
      }
      const auto id = work_list_.front();
      work_list_.pop_front();
      auto& b = buffers_[id];
      set_state(b, BufferState::Work, BufferState::Consumer);
      consumer_ = static_cast<int>(id);
      read_pos_ = 0;
      if (on_begin_) on_begin_(b.generation);
      if (b.terminal) {
        release_consumer_locked();
        at_end_ = true;
        return StreamEvent{EventKind::EndOfStream, 0};
      }
    }
    auto& b = buffers_[consumer_];
    if (read_pos_ < b.length) {
      const Word w = b.entries[read_pos_++];
      if (w != kEarlySwitch) return StreamEvent{EventKind::Word, w};
    }
    // Sentinel, or the submitted length of a Full buffer is exhausted.
    release_consumer_locked();
    return StreamEvent{EventKind::SwitchToNext, 0};
  }
}

StreamEvent RecordChannel::next() { return *next_impl(true); }

std::optional<StreamEvent> RecordChannel::try_next() { return next_impl(false); }

bool RecordChannel::consumer_can_progress() const {
  std::lock_guard lk(mu_);
  return !at_end_ && (consumer_ >= 0 || !work_list_.empty());
}

std::uint64_t RecordChannel::submitted_generations() const {
  std::lock_guard lk(mu_);
  return next_generation_;
}

std::uint64_t RecordChannel::producer_generation() const {
  std::lock_guard lk(mu_);
  return next_generation_;
}

std::uint64_t RecordChannel::bf() const {
  std::lock_guard lk(mu_);
  return bf_;
}

std::uint64_t RecordChannel::submissions(SubmitReason r) const {
  std::lock_guard lk(mu_);
  return by_reason_[static_cast<std::size_t>(r)];
}

std::uint64_t RecordChannel::submissions_total() const {
  std::lock_guard lk(mu_);
  std::uint64_t n = 0;
  for (auto v : by_reason_) n += v;
  return n;
}

std::uint64_t RecordChannel::words_written() const {
  std::lock_guard lk(mu_);
  return words_;
}

std::array<std::size_t, 4> RecordChannel::census() const {
  std::lock_guard lk(mu_);
  std::array<std::size_t, 4> c{};
  for (const auto& b : buffers_) ++c[static_cast<std::size_t>(b.state)];
  return c;
}

std::vector<std::uint64_t> RecordChannel::work_generations() const {
  std::lock_guard lk(mu_);
  std::vector<std::uint64_t> g;
  for (auto id : work_list_) g.push_back(buffers_[id].generation);
  return g;
}

}  // namespace half
