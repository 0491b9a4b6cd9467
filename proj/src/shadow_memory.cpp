#include "half/shadow_memory.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace half {

SpillStore::SpillStore(std::string path) : path_(std::move(path)) {}

SpillStore::~SpillStore() {
  if (f_) std::fclose(f_);
}

void SpillStore::open() {
  if (f_) return;
  f_ = path_.empty() ? std::tmpfile() : std::fopen(path_.c_str(), "w+b");
  if (!f_) throw std::runtime_error("cannot open spill store '" + path_ + "'");
}

std::uint64_t SpillStore::append(Addr page, const std::uint8_t* bytes) {
  open();
  const std::uint64_t at = end_;
  if (std::fseek(f_, static_cast<long>(at), SEEK_SET) != 0 || std::fwrite(&page, sizeof page, 1, f_) != 1 ||
      std::fwrite(bytes, 1, kPageSize, f_) != kPageSize || std::fflush(f_) != 0)
    throw std::runtime_error("spill store write failed");
  end_ += sizeof page + kPageSize;
  ++records_;
  return at;
}

void SpillStore::load(std::uint64_t offset, Addr page, std::uint8_t* out) {
  open();
  Addr tag = 0;
  if (std::fseek(f_, static_cast<long>(offset), SEEK_SET) != 0 || std::fread(&tag, sizeof tag, 1, f_) != 1 ||
      std::fread(out, 1, kPageSize, f_) != kPageSize)
    throw std::runtime_error("spill store read failed");
  if (tag != page) throw std::runtime_error("spill store record does not match page");
}

ShadowMemory::ShadowMemory(ShadowConfig cfg)
    : cfg_(std::move(cfg)), store_(std::make_unique<SpillStore>(cfg_.spill_path)) {}

void ShadowMemory::check_range(Addr addr, std::size_t len) {
  const Addr last = addr + len - 1;
  if (last < addr || (addr <= kReservedHigh && last >= kReservedLow)) {
    std::ostringstream os;
    os << "shadow access at 0x" << std::hex << addr << " touches the reserved sentinel range";
    throw VmFault(FaultKind::SentinelCollision, os.str());
  }
}

ShadowMemory::Page& ShadowMemory::reload(Addr page) {
  auto it = spilled_.find(page);
  auto pg = std::make_unique<Page>();
  store_->load(it->second.offset, page, pg->bytes.data());
  pg->free_marked = it->second.free_marked;
  spilled_.erase(it);
  ++reloads_;
  auto& ref = *pg;
  pages_[page] = std::move(pg);
  peak_ = std::max(peak_, pages_.size());
  return ref;
}

ShadowMemory::Page& ShadowMemory::page_for_write(Addr page) {
  auto it = pages_.find(page);
  Page* p = nullptr;
  if (it != pages_.end()) {
    p = it->second.get();
  } else if (spilled_.count(page)) {
    p = &reload(page);
  } else {
    auto pg = std::make_unique<Page>();
    p = pg.get();
    pages_[page] = std::move(pg);
    ++first_touch_;
    peak_ = std::max(peak_, pages_.size());
  }
  p->last_touch = ++clock_;
  return *p;
}

const ShadowMemory::Page* ShadowMemory::page_for_read(Addr page) {
  auto it = pages_.find(page);
  Page* p = nullptr;
  if (it != pages_.end()) p = it->second.get();
  else if (spilled_.count(page)) p = &reload(page);
  else return nullptr;
  p->last_touch = ++clock_;
  return p;
}

void ShadowMemory::read(Addr addr, std::span<TaintLabel> out) {
  if (out.empty()) return;
  check_range(addr, out.size());
  std::lock_guard lk(mu_);
  std::size_t done = 0;
  while (done < out.size()) {
    const Addr a = addr + done;
    const Addr off = a - page_of(a);
    const std::size_t n = std::min<std::size_t>(out.size() - done, kPageSize - off);
    const Page* p = page_for_read(page_of(a));
    if (p) std::memcpy(out.data() + done, p->bytes.data() + off, n);
    else std::memset(out.data() + done, 0, n);
    done += n;
  }
  maybe_spill();
}

void ShadowMemory::write(Addr addr, std::span<const TaintLabel> labels) {
  if (labels.empty()) return;
  check_range(addr, labels.size());
  std::lock_guard lk(mu_);
  std::size_t done = 0;
  while (done < labels.size()) {
    const Addr a = addr + done;
    const Addr off = a - page_of(a);
    const std::size_t n = std::min<std::size_t>(labels.size() - done, kPageSize - off);
    Page& p = page_for_write(page_of(a));
    std::memcpy(p.bytes.data() + off, labels.data() + done, n);
    done += n;
  }
  maybe_spill();
}

std::vector<TaintLabel> ShadowMemory::taint_read(Addr addr, std::size_t len) {
  if (len == 0) throw std::invalid_argument("taint_read of zero bytes");
  std::vector<TaintLabel> out(len);
  read(addr, out);
  return out;
}

void ShadowMemory::taint_write(Addr addr, std::span<const TaintLabel> labels) { write(addr, labels); }

void ShadowMemory::mirror_alloc(Addr base, std::uint64_t size) {
  if (base % kPageSize != 0 || size % kPageSize != 0) throw std::invalid_argument("mirror_alloc range not page aligned");
  if (size == 0) return;
  check_range(base, size);
  std::lock_guard lk(mu_);
  for (Addr p = base; p < base + size; p += kPageSize) {
    if (auto it = pages_.find(p); it != pages_.end()) {
      it->second->free_marked = false;
    } else if (auto s = spilled_.find(p); s != spilled_.end()) {
      s->second.free_marked = false;  // content reloads lazily on next touch
    } else {
      auto pg = std::make_unique<Page>();
      pg->last_touch = ++clock_;
      pages_[p] = std::move(pg);
      ++mirror_commits_;
    }
  }
  peak_ = std::max(peak_, pages_.size());
  maybe_spill();
}

void ShadowMemory::mirror_free(Addr base, std::uint64_t size) {
  if (base % kPageSize != 0 || size % kPageSize != 0) throw std::invalid_argument("mirror_free range not page aligned");
  std::lock_guard lk(mu_);
  for (Addr p = base; p < base + size; p += kPageSize) {
    if (auto it = pages_.find(p); it != pages_.end()) it->second->free_marked = true;
    else if (auto s = spilled_.find(p); s != spilled_.end()) s->second.free_marked = true;
  }
}

std::uint64_t ShadowMemory::spill(std::uint64_t target_bytes) {
  if (target_bytes == 0) throw std::invalid_argument("spill target must be positive");
  std::lock_guard lk(mu_);
  return spill_locked(target_bytes);
}

std::uint64_t ShadowMemory::spill_locked(std::uint64_t target_bytes) {
  std::vector<std::pair<Addr, const Page*>> order;
  order.reserve(pages_.size());
  for (const auto& [a, p] : pages_) order.emplace_back(a, p.get());
  // Free-marked first, then least recently touched; address breaks ties.
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
    if (x.second->free_marked != y.second->free_marked) return x.second->free_marked;
    if (x.second->last_touch != y.second->last_touch) return x.second->last_touch < y.second->last_touch;
    return x.first < y.first;
  });
  std::uint64_t released = 0;
  for (const auto& [a, p] : order) {
    if (released >= target_bytes) break;
    const auto off = store_->append(a, p->bytes.data());
    spilled_[a] = SpillSlot{off, p->free_marked};
    pages_.erase(a);
    released += kPageSize;
  }
  return released;
}

void ShadowMemory::maybe_spill() {
  if (cfg_.high_water_pages == 0 || pages_.size() <= cfg_.high_water_pages) return;
  spill_locked((pages_.size() - cfg_.high_water_pages) * kPageSize);
}

PageStatus ShadowMemory::status(Addr page) const {
  std::lock_guard lk(mu_);
  if (pages_.count(page_of(page))) return PageStatus::Committed;
  if (spilled_.count(page_of(page))) return PageStatus::Spilled;
  return PageStatus::Absent;
}

std::size_t ShadowMemory::committed_pages() const {
  std::lock_guard lk(mu_);
  return pages_.size();
}

std::size_t ShadowMemory::peak_committed_pages() const {
  std::lock_guard lk(mu_);
  return peak_;
}

std::size_t ShadowMemory::spilled_pages() const {
  std::lock_guard lk(mu_);
  return spilled_.size();
}

std::uint64_t ShadowMemory::fault_count() const {
  std::lock_guard lk(mu_);
  return first_touch_ + reloads_;
}

std::uint64_t ShadowMemory::first_touch_commits() const {
  std::lock_guard lk(mu_);
  return first_touch_;
}

std::uint64_t ShadowMemory::reloads() const {
  std::lock_guard lk(mu_);
  return reloads_;
}

std::uint64_t ShadowMemory::mirror_commits() const {
  std::lock_guard lk(mu_);
  return mirror_commits_;
}

std::map<Addr, TaintLabel> ShadowMemory::flat() {
  std::lock_guard lk(mu_);
  std::map<Addr, TaintLabel> out;
  auto add = [&](Addr page, const TaintLabel* bytes) {
    for (Addr i = 0; i < kPageSize; ++i)
      if (bytes[i]) out[page + i] = bytes[i];
  };
  for (const auto& [a, p] : pages_) add(a, p->bytes.data());
  std::array<TaintLabel, kPageSize> tmp{};
  for (const auto& [a, s] : spilled_) {
    store_->load(s.offset, a, tmp.data());
    add(a, tmp.data());
  }
  return out;
}

std::uint64_t ShadowMemory::digest() { return taint_digest(flat()); }

Region prealloc_reserve(World& world, Addr base, unsigned ratio) {
  if (ratio == 0) throw std::invalid_argument("prealloc ratio must be positive");
  const Addr size = world.config().span / ratio;
  world.reserve(base, size, "prealloc-shadow");
  return Region{base, size, RegionKind::Reserved, "prealloc-shadow"};
}

}  // namespace half
