// Identical-address taint store: the label for target byte A lives at key A.
// Pages are committed on first write, mirrored eagerly from target ALLOC,
// and may be spilled to an append-only file and reloaded on next touch.

#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "half/taint.hpp"
#include "half/world.hpp"

namespace half {

struct ShadowConfig {
  std::size_t high_water_pages = 16384;  // auto-spill above this many committed pages
  std::string spill_path;                // empty: anonymous temporary file
};

// Append-only file of (page address, 4096 label bytes) records.
class SpillStore {
 public:
  explicit SpillStore(std::string path);
  ~SpillStore();
  SpillStore(const SpillStore&) = delete;
  SpillStore& operator=(const SpillStore&) = delete;

  // Both throw std::runtime_error on I/O failure.
  std::uint64_t append(Addr page, const std::uint8_t* bytes);
  void load(std::uint64_t offset, Addr page, std::uint8_t* out);
  std::uint64_t records() const { return records_; }

 private:
  void open();
  std::string path_;
  std::FILE* f_ = nullptr;
  std::uint64_t end_ = 0;
  std::uint64_t records_ = 0;
};

enum class PageStatus : std::uint8_t { Absent, Committed, Spilled };

class ShadowMemory : public MemoryTaint {
 public:
  explicit ShadowMemory(ShadowConfig cfg = {});

  // MemoryTaint. Ranges touching the sentinel range throw
  // VmFault(SentinelCollision).
  void read(Addr addr, std::span<TaintLabel> out) override;
  void write(Addr addr, std::span<const TaintLabel> labels) override;

  std::vector<TaintLabel> taint_read(Addr addr, std::size_t len);
  void taint_write(Addr addr, std::span<const TaintLabel> labels);

  void mirror_alloc(Addr base, std::uint64_t size);
  void mirror_free(Addr base, std::uint64_t size);
  std::uint64_t spill(std::uint64_t target_bytes);

  PageStatus status(Addr page) const;
  std::size_t committed_pages() const;
  std::size_t peak_committed_pages() const;
  std::size_t spilled_pages() const;
  std::uint64_t fault_count() const;
  std::uint64_t first_touch_commits() const;
  std::uint64_t reloads() const;
  std::uint64_t mirror_commits() const;

  // Every nonzero label, spilled pages included, without changing state.
  std::map<Addr, TaintLabel> flat();
  std::uint64_t digest();

  // Prealloc scheme bookkeeping: the region reserved inside the target.
  std::optional<Region> reserved_in_target;

 private:
  struct Page {
    std::array<TaintLabel, kPageSize> bytes{};
    bool free_marked = false;
    std::uint64_t last_touch = 0;
  };
  struct SpillSlot {
    std::uint64_t offset = 0;
    bool free_marked = false;
  };

  Page& page_for_write(Addr page);
  const Page* page_for_read(Addr page);
  Page& reload(Addr page);
  void maybe_spill();
  std::uint64_t spill_locked(std::uint64_t target_bytes);
  static void check_range(Addr addr, std::size_t len);

  ShadowConfig cfg_;
  mutable std::mutex mu_;
  std::unordered_map<Addr, std::unique_ptr<Page>> pages_;
  std::unordered_map<Addr, SpillSlot> spilled_;
  std::unique_ptr<SpillStore> store_;
  std::uint64_t clock_ = 0;
  std::uint64_t first_touch_ = 0;
  std::uint64_t reloads_ = 0;
  std::uint64_t mirror_commits_ = 0;
  std::size_t peak_ = 0;
};

// Reserves span/ratio bytes at `base` inside the target address space.
// Throws VmFault(AddressConflict) if it collides with the program image.
Region prealloc_reserve(World& world, Addr base, unsigned ratio = 8);

inline constexpr Addr kPreallocBase = 0x2000'0000;

}  // namespace half
