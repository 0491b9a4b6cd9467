#include "half/world.hpp"

#include <algorithm>
#include <sstream>

namespace half {

namespace {

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

Addr round_up(Addr v) { return (v + kPageSize - 1) & ~(kPageSize - 1); }

constexpr Addr kNullGuard = 0x1'0000;

}  // namespace

World::World(WorldConfig cfg) : cfg_(cfg), events_(cfg.event_count, 0) {
  regions_[0] = Region{0, kNullGuard, RegionKind::Reserved, "null-guard"};
}

void World::load(const Program& program) {
  if (!program.instructions.empty()) {
    const Addr lo = page_of(kCodeBase);
    reserve(lo, round_up(program.code_end()) - lo, "code");
  }
  for (const auto& img : program.data) {
    if (img.bytes.empty()) continue;
    for (Addr p = page_of(img.addr); p < img.addr + img.bytes.size(); p += kPageSize) {
      if (memory.committed(p)) continue;
      if (!range_free(p, kPageSize))
        throw VmFault(FaultKind::AddressConflict, "data image overlaps reserved region at " + hex(p));
      regions_[p] = Region{p, kPageSize, RegionKind::Image, "data"};
      memory.commit(p);
      ++committed_total_;
    }
    memory.write(img.addr, img.bytes.data(), img.bytes.size());
  }
}

bool World::range_free(Addr base, Addr size) const {
  if (size == 0 || base + size < base || base + size > cfg_.span) return false;
  auto it = regions_.upper_bound(base);
  if (it != regions_.begin()) {
    auto prev = std::prev(it);
    if (prev->second.end() > base) return false;
  }
  return it == regions_.end() || it->first >= base + size;
}

void World::reserve(Addr base, Addr size, const std::string& name) {
  if (!range_free(base, size))
    throw VmFault(FaultKind::AddressConflict,
                  "reservation '" + name + "' at " + hex(base) + " size " + hex(size) + " conflicts");
  regions_[base] = Region{base, size, RegionKind::Reserved, name};
}

Addr World::allocate(Addr size, Addr fixed) {
  if (size == 0) throw VmFault(FaultKind::InvalidAlloc, "ALLOC of size 0");
  size = round_up(size);
  Addr base = 0;
  if (fixed != 0) {
    if (fixed % kPageSize != 0) throw VmFault(FaultKind::InvalidAlloc, "fixed ALLOC address not page aligned");
    if (!range_free(fixed, size))
      throw VmFault(FaultKind::AddressConflict, "fixed ALLOC at " + hex(fixed) + " size " + hex(size) +
                                                    " overlaps a committed or reserved region");
    base = fixed;
  } else {
    Addr cand = cfg_.heap_base;
    for (;;) {
      if (cand + size > cfg_.span || cand + size < cand)
        throw VmFault(FaultKind::InvalidAlloc, "out of address space");
      auto it = regions_.upper_bound(cand);
      if (it != regions_.begin() && std::prev(it)->second.end() > cand) {
        cand = std::prev(it)->second.end();
        continue;
      }
      if (it != regions_.end() && it->first < cand + size) {
        cand = it->second.end();
        continue;
      }
      break;
    }
    base = cand;
  }
  regions_[base] = Region{base, size, RegionKind::Alloc, "alloc"};
  for (Addr p = base; p < base + size; p += kPageSize) memory.commit(p);
  committed_total_ += size / kPageSize;
  return base;
}

Addr World::free(Addr base) {
  auto it = regions_.find(base);
  if (it == regions_.end() || it->second.kind != RegionKind::Alloc)
    throw VmFault(FaultKind::BadFree, "FREE of " + hex(base) + " which is not an allocation");
  const Addr size = it->second.size;
  for (Addr p = base; p < base + size; p += kPageSize) memory.release(p);
  regions_.erase(it);
  return size;
}

void World::check_event(std::uint32_t event) const {
  if (event >= events_.size())
    throw VmFault(FaultKind::InvalidEvent, "event " + std::to_string(event) + " out of range");
}

bool World::try_wait(std::uint32_t event) {
  check_event(event);
  if (events_[event] == 0) return false;
  --events_[event];
  return true;
}

void World::signal(std::uint32_t event) {
  check_event(event);
  ++events_[event];
}

SyscallResult exec_syscall(MachineState& st, SyscallKind kind, World& w) {
  auto& r = st.regs;
  SyscallResult res;
  res.effect.kind = kind;
  auto read_stream = [&](std::vector<std::vector<std::uint8_t>>& streams, std::vector<std::size_t>& cursors) {
    const Addr buf = r[1];
    const Word len = r[2];
    const auto id = static_cast<std::size_t>(r[3]);
    if (cursors.size() < streams.size()) cursors.resize(streams.size(), 0);
    Word n = 0;
    if (id < streams.size()) {
      const auto& s = streams[id];
      n = std::min<Word>(len, s.size() - cursors[id]);
      w.memory.write(buf, s.data() + cursors[id], n);
      cursors[id] += n;
    }
    res.effect.addr = buf;
    res.effect.len = n;
    r[0] = n;
  };
  auto write_sink = [&](std::vector<std::uint8_t>& sink) {
    const Addr addr = r[1];
    const Word len = r[2];
    if (!w.memory.accessible(addr, len))
      throw VmFault(FaultKind::UnmappedMemory, "write from unmapped memory at " + hex(addr));
    const auto at = sink.size();
    sink.resize(at + len);
    w.memory.read(addr, sink.data() + at, len);
    res.effect.addr = addr;
    res.effect.len = len;
    r[0] = len;
  };
  switch (kind) {
    case SyscallKind::RECV: read_stream(w.net_in, w.net_cursor_); break;
    case SyscallKind::FREAD: read_stream(w.file_in, w.file_cursor_); break;
    case SyscallKind::SEND: write_sink(w.net_out); break;
    case SyscallKind::FWRITE: write_sink(w.file_out); break;
    case SyscallKind::ALLOC: {
      const Addr base = w.allocate(r[1], r[2]);
      res.effect.addr = base;
      res.effect.len = round_up(r[1]);
      r[0] = base;
      break;
    }
    case SyscallKind::FREE: {
      res.effect.addr = r[1];
      res.effect.len = w.free(r[1]);
      r[0] = 0;
      break;
    }
    case SyscallKind::SPAWN:
      res.status = SyscallStatus::Spawn;
      res.spawn_entry = r[1];
      res.spawn_arg = r[2];
      break;
    case SyscallKind::WAIT: {
      const auto ev = static_cast<std::uint32_t>(std::min<Word>(r[1], 0xFFFF'FFFF));
      w.check_event(ev);
      res.event = ev;
      r[0] = 0;
      if (!w.try_wait(ev)) res.status = SyscallStatus::Block;
      break;
    }
    case SyscallKind::SIGNAL: {
      const auto ev = static_cast<std::uint32_t>(std::min<Word>(r[1], 0xFFFF'FFFF));
      w.signal(ev);
      res.event = ev;
      r[0] = 0;
      break;
    }
    case SyscallKind::EXIT:
      res.status = SyscallStatus::Exit;
      break;
  }
  return res;
}

}  // namespace half
