// Randomized property suites shared by the unit tests and the acceptance
// binary. Each returns the number of cases run and the first failure.

#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "half/record_channel.hpp"
#include "half/shadow_memory.hpp"

namespace half::props {

struct Result {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first;
  void fail(const std::string& what) {
    if (failures++ == 0) first = what;
  }
};

// Random producer/consumer interleavings on one channel, checked against a
// model of fill level: lossless FIFO, guard switch-and-reissue, sentinel
// length on early submission, one SwitchToNext per nonempty buffer, census
// and BF accounting.
inline Result channel_property(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Result res;
  for (std::size_t iter = 0; iter < cases; ++iter, ++res.cases) {
    const std::size_t n = 2 + rng() % 4;
    const std::size_t cap = 2 + rng() % 14;
    const std::size_t guard = 1 + rng() % (cap - 1);
    const std::size_t usable = cap - guard;
    RecordChannel ch(ChannelConfig{n, cap, guard, false});

    std::vector<Word> produced, consumed;
    std::size_t fill = 0, nonempty_submits = 0, switches = 0;
    std::uint64_t full_seen = 0, last_bf = 0;
    std::string err;
    auto check = [&](bool c, const char* what) {
      if (!c && err.empty()) err = what;
    };
    auto consume_one = [&] {
      auto ev = ch.try_next();
      if (!ev) return false;
      if (ev->kind == EventKind::Word) consumed.push_back(ev->value);
      if (ev->kind == EventKind::SwitchToNext) ++switches;
      return ev->kind != EventKind::EndOfStream;
    };
    ch.set_submit_listener([&](const SubmitInfo& s) {
      if (s.length == 0) return;  // terminal
      ++nonempty_submits;
      if (s.reason == SubmitReason::Full) {
        ++full_seen;
        check(s.length == usable, "Full buffer not filled to the guard");
      } else {
        check(s.length == fill + 1, "early submission without exactly one sentinel");
      }
      check(s.signal_flag == (s.reason == SubmitReason::SyncSignal), "signal flag mismatch");
    });
    ch.set_starvation_handler([&] {
      const auto before = ch.finished_generations();
      while (ch.finished_generations() == before && consume_one()) {}
    });

    const int ops = 1 + static_cast<int>(rng() % 60);
    for (int k = 0; k < ops && err.empty(); ++k) {
      const auto r = rng() % 10;
      if (r < 6) {
        const Word w = rng() % 1000;
        produced.push_back(w);
        const bool at_guard = fill == usable;
        const auto out = ch.write(w);
        check(out == (at_guard ? WriteOutcome::SwitchedThenOk : WriteOutcome::Ok), "guard switch mismatch");
        fill = at_guard ? 1 : fill + 1;
      } else if (r == 6) {
        const auto reason = rng() & 1 ? SubmitReason::SyncWait : SubmitReason::SyncSignal;
        const bool had = fill > 0;
        check(ch.submit_current(reason) == had, "submit_current result mismatch");
        fill = 0;
      } else {
        for (auto m = rng() % 4; m > 0; --m) consume_one();
      }
      const auto c = ch.census();
      check(c[0] + c[1] + c[2] + c[3] == n && c[1] <= 1 && c[3] <= 1, "ownership census");
      check(ch.bf() >= last_bf, "BF decreased");
      last_bf = ch.bf();
      const auto wg = ch.work_generations();
      check(std::is_sorted(wg.begin(), wg.end()), "work list out of submission order");
    }
    ch.close(rng() % 5 == 0);
    while (consume_one()) {}
    check(ch.at_end(), "no EndOfStream");
    check(consumed == produced, "consumed stream differs from produced stream");
    check(switches == nonempty_submits, "SwitchToNext count differs from nonempty buffers");
    check(ch.bf() == full_seen && ch.bf() == ch.submissions(SubmitReason::Full), "BF accounting");
    check(ch.finished_generations() == ch.submitted_generations(), "unfinished generations");
    check(ch.census() == std::array<std::size_t, 4>{n, 0, 0, 0}, "buffers not all free at end");
    if (!err.empty()) {
      std::ostringstream os;
      os << "case " << iter << " (n=" << n << " cap=" << cap << " guard=" << guard << "): " << err;
      res.fail(os.str());
    }
  }
  return res;
}

// Random write/read/mirror/spill sequences against a flat reference map.
// Fault counts are predicted from page status before each op.
inline Result shadow_property(std::size_t cases, std::size_t ops, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Result res;
  for (std::size_t c = 0; c < cases; ++c, ++res.cases) {
    ShadowConfig cfg;
    cfg.high_water_pages = 2 + rng() % 6;
    ShadowMemory sh(cfg);
    std::map<Addr, TaintLabel> ref;
    std::set<Addr> touched;
    std::uint64_t faults = 0;
    const Addr base = 0x0100'0000 + (rng() % 16) * kPageSize;
    const Addr window = 12 * kPageSize;
    std::string err;
    auto check = [&](bool ok, const char* what) {
      if (!ok && err.empty()) err = what;
    };
    auto pages_in = [](Addr a, std::size_t len) {
      std::vector<Addr> ps;
      for (Addr p = page_of(a); p < a + len; p += kPageSize) ps.push_back(p);
      return ps;
    };

    for (std::size_t k = 0; k < ops && err.empty(); ++k) {
      const auto r = rng() % 100;
      const Addr a = base + rng() % window;
      const std::size_t len = 1 + rng() % 96;
      if (r < 45) {
        std::vector<TaintLabel> ls(len);
        for (auto& l : ls) l = rng() % 3 ? 0 : TaintLabel(1u << (rng() % 8));
        for (Addr p : pages_in(a, len)) {
          faults += sh.status(p) != PageStatus::Committed;
          touched.insert(p);
        }
        sh.taint_write(a, ls);
        for (std::size_t i = 0; i < len; ++i) {
          if (ls[i]) ref[a + i] = ls[i];
          else ref.erase(a + i);
        }
      } else if (r < 85) {
        for (Addr p : pages_in(a, len)) faults += sh.status(p) == PageStatus::Spilled;
        const auto got = sh.taint_read(a, len);
        for (std::size_t i = 0; i < len; ++i) {
          auto it = ref.find(a + i);
          check(got[i] == (it == ref.end() ? 0 : it->second), "read differs from reference");
        }
      } else if (r < 92) {
        const Addr pa = page_of(a);
        const Addr sz = (1 + rng() % 3) * kPageSize;
        for (Addr p = pa; p < pa + sz; p += kPageSize) touched.insert(p);
        if (rng() & 1) sh.mirror_alloc(pa, sz);
        else sh.mirror_free(pa, sz);
      } else {
        sh.spill((1 + rng() % 4) * kPageSize);
      }
      check(sh.fault_count() == faults, "fault count differs from prediction");
      check(sh.fault_count() == sh.first_touch_commits() + sh.reloads(), "CF != first touches + reloads");
      check(sh.committed_pages() <= touched.size(), "more pages committed than touched");
      check(sh.committed_pages() <= cfg.high_water_pages, "high-water mark exceeded");
    }
    check(sh.flat() == ref, "final shadow differs from reference");
    check(sh.digest() == taint_digest(ref), "digest differs");
    if (!err.empty()) res.fail("case " + std::to_string(c) + ": " + err);
  }
  return res;
}

}  // namespace half::props
