// Per-thread record stream: a fixed pool of fixed-capacity buffers cycling
// through free list -> producer -> work list -> consumer -> free list.
// The last `guard` slots of each buffer are never filled by data; a write
// that lands there submits the buffer (reason Full) and is re-issued into a
// fresh one.

#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "half/isa.hpp"

namespace half {

struct ChannelConfig {
  std::size_t n_buffers = 2;
  std::size_t capacity = 65536;  // words
  std::size_t guard = 1;         // words
  bool discard_on_submit = false;  // record-only: recycle without analysis
};

// Throws std::invalid_argument unless n_buffers >= 2 and capacity > guard >= 1.
void validate(const ChannelConfig& cfg);

enum class SubmitReason : std::uint8_t { Full, SyncWait, SyncSignal, ThreadExit };
inline constexpr std::size_t kSubmitReasons = 4;
std::string_view to_string(SubmitReason r);

enum class WriteOutcome : std::uint8_t { Ok, SwitchedThenOk };

enum class BufferState : std::uint8_t { Free, Producer, Work, Consumer };

struct RecordBuffer {
  std::uint32_t id = 0;
  std::vector<Word> entries;
  std::size_t write_pos = 0;
  std::size_t length = 0;  // submitted length, sentinel included
  BufferState state = BufferState::Free;
  SubmitReason reason = SubmitReason::Full;
  bool signal_flag = false;
  bool terminal = false;
  std::uint64_t generation = 0;
};

enum class EventKind : std::uint8_t { Word, SwitchToNext, EndOfStream };

struct StreamEvent {
  EventKind kind = EventKind::Word;
  Word value = 0;
  friend bool operator==(const StreamEvent&, const StreamEvent&) = default;
};

struct SubmitInfo {
  std::uint64_t generation = 0;
  SubmitReason reason = SubmitReason::Full;
  bool signal_flag = false;
  std::size_t length = 0;
};

class RecordChannel {
 public:
  explicit RecordChannel(ChannelConfig cfg);
  RecordChannel(const RecordChannel&) = delete;
  RecordChannel& operator=(const RecordChannel&) = delete;

  const ChannelConfig& config() const { return cfg_; }
  std::size_t usable_capacity() const { return cfg_.capacity - cfg_.guard; }

  // Producer side. Words in the reserved sentinel range are rejected with
  // std::invalid_argument.
  WriteOutcome write(Word value);
  // Returns true if a nonempty buffer was submitted.
  bool submit_current(SubmitReason reason);
  // Final submission; the consumer sees EndOfStream after the last buffer.
  void close(bool aborted);
  bool closed() const { return closed_; }
  bool producer_empty() const;

  // Consumer side. next() blocks; try_next() returns nullopt instead.
  StreamEvent next();
  std::optional<StreamEvent> try_next();
  bool consumer_can_progress() const;
  bool aborted() const { return aborted_.load(); }
  bool at_end() const { return at_end_; }

  // Generation g (the g-th submitted buffer) is fully consumed iff
  // finished_generations() > g.
  std::uint64_t finished_generations() const { return finished_.load(std::memory_order_acquire); }
  std::uint64_t submitted_generations() const;
  // Generation that the producer's current buffer will carry.
  std::uint64_t producer_generation() const;

  // Counters.
  std::uint64_t bf() const;
  std::uint64_t submissions(SubmitReason r) const;
  std::uint64_t submissions_total() const;
  std::uint64_t words_written() const;

  // Called (with the channel unlocked) when the producer needs a free buffer
  // and none is available; must make progress or the producer waits.
  void set_starvation_handler(std::function<void()> fn) { starvation_ = std::move(fn); }
  void set_submit_listener(std::function<void(const SubmitInfo&)> fn) { on_submit_ = std::move(fn); }
  // Called on the consumer when it begins a generation.
  void set_begin_listener(std::function<void(std::uint64_t)> fn) { on_begin_ = std::move(fn); }

  // Ownership census for invariant checks: count of buffers per state.
  std::array<std::size_t, 4> census() const;
  std::vector<std::uint64_t> work_generations() const;

 private:
  void submit_locked(std::unique_lock<std::mutex>& lk, SubmitReason reason, bool terminal);
  void acquire_free(std::unique_lock<std::mutex>& lk);
  void release_consumer_locked();
  std::optional<StreamEvent> next_impl(bool block);
  void set_state(RecordBuffer& b, BufferState from, BufferState to);

  ChannelConfig cfg_;
  std::vector<RecordBuffer> buffers_;
  mutable std::mutex mu_;
  std::condition_variable cv_free_;
  std::condition_variable cv_work_;
  std::deque<std::uint32_t> free_list_;
  std::deque<std::uint32_t> work_list_;
  int producer_ = -1;
  int consumer_ = -1;
  std::size_t read_pos_ = 0;
  std::uint64_t next_generation_ = 0;
  std::atomic<std::uint64_t> finished_{0};
  std::atomic<bool> aborted_{false};
  bool closed_ = false;
  bool at_end_ = false;

  std::uint64_t bf_ = 0;
  std::array<std::uint64_t, kSubmitReasons> by_reason_{};
  std::uint64_t words_ = 0;

  std::function<void()> starvation_;
  std::function<void(const SubmitInfo&)> on_submit_;
  std::function<void(std::uint64_t)> on_begin_;
};

}  // namespace half
