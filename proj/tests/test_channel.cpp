#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <thread>

#include "half/record_channel.hpp"
#include "properties.hpp"

using namespace half;

namespace {

ChannelConfig cfg_of(std::size_t n, std::size_t cap, std::size_t guard = 1) {
  ChannelConfig c;
  c.n_buffers = n;
  c.capacity = cap;
  c.guard = guard;
  return c;
}

// Drains everything currently consumable; returns words seen.
std::vector<Word> drain(RecordChannel& ch) {
  std::vector<Word> out;
  while (auto ev = ch.try_next()) {
    if (ev->kind == EventKind::Word) out.push_back(ev->value);
    if (ev->kind == EventKind::EndOfStream) break;
  }
  return out;
}

}  // namespace

TEST_CASE("create_channel") {
  SUBCASE("defaults") {
    ChannelConfig c;
    CHECK(c.n_buffers == 2);
    CHECK(c.capacity == 65536);
    CHECK(c.guard == 1);
    RecordChannel ch(c);
    CHECK(ch.census() == std::array<std::size_t, 4>{1, 1, 0, 0});
  }
  SUBCASE("64KB analog") {
    RecordChannel ch(cfg_of(2, 8192));
    CHECK(ch.usable_capacity() == 8191);
  }
  SUBCASE("invalid sizes") {
    CHECK_THROWS_AS(RecordChannel(cfg_of(1, 16)), std::invalid_argument);
    CHECK_THROWS_AS(RecordChannel(cfg_of(2, 1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(RecordChannel(cfg_of(2, 16, 0)), std::invalid_argument);
    CHECK_NOTHROW(RecordChannel(cfg_of(2, 2, 1)));
  }
}

TEST_CASE("write_entry") {
  RecordChannel ch(cfg_of(4, 4));
  CHECK(ch.write(1) == WriteOutcome::Ok);
  CHECK(ch.write(2) == WriteOutcome::Ok);
  CHECK(ch.write(3) == WriteOutcome::Ok);
  CHECK(ch.bf() == 0);
  CHECK(ch.submitted_generations() == 0);
  CHECK(ch.write(4) == WriteOutcome::SwitchedThenOk);
  CHECK(ch.bf() == 1);
  CHECK(ch.submissions(SubmitReason::Full) == 1);
  CHECK(ch.work_generations() == std::vector<std::uint64_t>{0});
  CHECK(drain(ch) == std::vector<Word>{1, 2, 3});

  SUBCASE("ten writes at capacity 4") {
    RecordChannel c2(cfg_of(8, 4));
    for (Word w = 1; w <= 10; ++w) c2.write(w);
    CHECK(c2.bf() == 3);
    c2.close(false);
    std::vector<Word> want(10);
    for (Word w = 1; w <= 10; ++w) want[w - 1] = w;
    CHECK(drain(c2) == want);
    CHECK(c2.at_end());
  }
  SUBCASE("sentinel range is rejected") {
    CHECK_THROWS_AS(ch.write(kEarlySwitch), std::invalid_argument);
    CHECK_THROWS_AS(ch.write(0xFFFF'FFFF'FFFF'0000ull), std::invalid_argument);
    CHECK_THROWS_AS(ch.write(0xFFFF'FFFF'FFFF'00FFull), std::invalid_argument);
    CHECK_NOTHROW(ch.write(0xFFFF'FFFF'FFFF'0100ull));
    CHECK_NOTHROW(ch.write(0xFFFF'FFFF'FFFE'FFFFull));
  }
  SUBCASE("write after close") {
    ch.close(false);
    CHECK_THROWS_AS(ch.write(9), std::logic_error);
  }
}

TEST_CASE("submit_current") {
  RecordChannel ch(cfg_of(3, 16));
  std::vector<SubmitInfo> seen;
  ch.set_submit_listener([&](const SubmitInfo& s) { seen.push_back(s); });

  SUBCASE("signal submission carries the flag and a sentinel") {
    ch.write(0xA000);
    ch.write(0x5008);
    CHECK(ch.submit_current(SubmitReason::SyncSignal));
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].signal_flag);
    CHECK(seen[0].length == 3);
    CHECK(seen[0].reason == SubmitReason::SyncSignal);
    CHECK(ch.bf() == 0);
    CHECK(ch.next() == StreamEvent{EventKind::Word, 0xA000});
    CHECK(ch.next() == StreamEvent{EventKind::Word, 0x5008});
    CHECK(ch.next() == StreamEvent{EventKind::SwitchToNext, 0});
    CHECK(ch.finished_generations() == 1);
  }
  SUBCASE("empty submit is a no-op") {
    CHECK_FALSE(ch.submit_current(SubmitReason::SyncWait));
    CHECK(seen.empty());
    CHECK(ch.submissions_total() == 0);
  }
  SUBCASE("thread exit on an empty buffer submits only the terminal") {
    CHECK_FALSE(ch.submit_current(SubmitReason::ThreadExit));
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].length == 0);
    CHECK(ch.closed());
    CHECK(ch.next().kind == EventKind::EndOfStream);
    CHECK(ch.next().kind == EventKind::EndOfStream);
  }
  SUBCASE("thread exit with data") {
    ch.write(7);
    CHECK(ch.submit_current(SubmitReason::ThreadExit));
    CHECK(seen.size() == 2);
    CHECK(ch.next() == StreamEvent{EventKind::Word, 7});
    CHECK(ch.next().kind == EventKind::SwitchToNext);
    CHECK(ch.next().kind == EventKind::EndOfStream);
    CHECK(ch.census() == std::array<std::size_t, 4>{3, 0, 0, 0});
  }
  SUBCASE("aborted close") {
    ch.write(1);
    ch.close(true);
    CHECK(ch.aborted());
    CHECK(drain(ch) == std::vector<Word>{1});
    ch.close(false);  // no-op once closed
    CHECK(ch.submissions_total() == 2);
  }
}

TEST_CASE("next_event: Full buffer ends without a sentinel") {
  RecordChannel ch(cfg_of(2, 4));
  std::vector<std::uint64_t> begun;
  ch.set_begin_listener([&](std::uint64_t g) { begun.push_back(g); });
  for (Word w = 1; w <= 4; ++w) ch.write(w);
  CHECK(ch.next() == StreamEvent{EventKind::Word, 1});
  CHECK(ch.next() == StreamEvent{EventKind::Word, 2});
  CHECK(ch.next() == StreamEvent{EventKind::Word, 3});
  CHECK(ch.next() == StreamEvent{EventKind::SwitchToNext, 0});
  CHECK_FALSE(ch.try_next().has_value());
  CHECK_FALSE(ch.consumer_can_progress());
  CHECK(begun == std::vector<std::uint64_t>{0});
}

TEST_CASE("starvation handler is called when every buffer is busy") {
  RecordChannel ch(cfg_of(2, 3));
  std::vector<Word> got;
  int calls = 0;
  ch.set_starvation_handler([&] {
    ++calls;
    while (auto ev = ch.try_next()) {
      if (ev->kind == EventKind::Word) got.push_back(ev->value);
      if (ev->kind == EventKind::SwitchToNext) break;
    }
  });
  for (Word w = 1; w <= 9; ++w) ch.write(w);
  ch.close(false);
  for (auto w : drain(ch)) got.push_back(w);
  CHECK(calls > 0);
  CHECK(got == std::vector<Word>{1, 2, 3, 4, 5, 6, 7, 8, 9});

  RecordChannel stuck(cfg_of(2, 2));
  stuck.set_starvation_handler([] {});
  stuck.write(1);
  stuck.write(2);
  CHECK_THROWS_AS(stuck.write(3), std::logic_error);
}

TEST_CASE("property: lossless FIFO, guard switch, sentinel, ownership, BF") {
  const auto r = props::channel_property(10000, 0xC4A1);
  CHECK(r.cases == 10000);
  CHECK_MESSAGE(r.failures == 0, r.first);
}

TEST_CASE("BF for a pure write stream is floor((n-1)/usable)") {
  for (std::size_t cap = 2; cap <= 12; ++cap)
    for (std::size_t n = 1; n <= 60; ++n) {
      RecordChannel ch(cfg_of(2, cap));
      ch.set_starvation_handler([&] { drain(ch); });
      for (std::size_t i = 0; i < n; ++i) ch.write(i);
      CHECK(ch.bf() == (n - 1) / (cap - 1));
    }
}

TEST_CASE("threaded producer and consumer") {
  for (std::size_t cap : {2, 5, 64}) {
    RecordChannel ch(cfg_of(2, cap));
    constexpr Word kN = 50000;
    std::vector<Word> got;
    std::thread consumer([&] {
      for (;;) {
        auto ev = ch.next();
        if (ev.kind == EventKind::EndOfStream) break;
        if (ev.kind == EventKind::Word) got.push_back(ev.value);
      }
    });
    for (Word w = 0; w < kN; ++w) {
      ch.write(w);
      if (w % 777 == 0) ch.submit_current(SubmitReason::SyncSignal);
    }
    ch.close(false);
    consumer.join();
    REQUIRE(got.size() == kN);
    bool in_order = true;
    for (Word w = 0; w < kN; ++w) in_order &= got[w] == w;
    CHECK(in_order);
  }
}
