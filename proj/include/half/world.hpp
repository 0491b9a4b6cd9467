// Everything outside a single thread's registers: shared target memory, the
// address-space map (allocations and reservations), input streams, output
// sinks and sync events. exec_syscall is the interception surface.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "half/machine.hpp"

namespace half {

struct WorldConfig {
  Addr span = 1ULL << 30;  // target user address space [0, span)
  Addr heap_base = 0x0100'0000;
  std::uint32_t event_count = 16;
};

enum class RegionKind : std::uint8_t { Reserved, Image, Alloc };

struct Region {
  Addr base = 0;
  Addr size = 0;
  RegionKind kind = RegionKind::Reserved;
  std::string name;
  Addr end() const { return base + size; }
};

enum class SyscallStatus : std::uint8_t { Done, Block, Exit, Spawn };

struct SyscallResult {
  SyscallStatus status = SyscallStatus::Done;
  SyscallEffect effect;
  std::uint32_t event = 0;
  Addr spawn_entry = 0;
  Word spawn_arg = 0;
};

class World {
 public:
  explicit World(WorldConfig cfg = {});

  const WorldConfig& config() const { return cfg_; }
  TargetMemory memory;

  std::vector<std::vector<std::uint8_t>> net_in;
  std::vector<std::vector<std::uint8_t>> file_in;
  std::vector<std::uint8_t> net_out;
  std::vector<std::uint8_t> file_out;

  // Reserves the code region and null guard, commits and fills data images.
  void load(const Program& program);

  // Throws VmFault(AddressConflict) if [base, base+size) overlaps any region
  // or leaves the span.
  void reserve(Addr base, Addr size, const std::string& name);
  Addr allocate(Addr size, Addr fixed);  // fixed == 0: first fit from heap_base
  Addr free(Addr base);                  // returns the released size
  bool range_free(Addr base, Addr size) const;
  const std::map<Addr, Region>& regions() const { return regions_; }

  bool try_wait(std::uint32_t event);
  void signal(std::uint32_t event);
  std::uint64_t event_count(std::uint32_t event) const { return events_.at(event); }
  void check_event(std::uint32_t event) const;

  // Pages committed by ALLOC or data images (TC analog).
  std::uint64_t committed_pages_total() const { return committed_total_; }

 private:
  WorldConfig cfg_;
  std::map<Addr, Region> regions_;
  std::vector<std::uint64_t> events_;
  std::vector<std::size_t> net_cursor_, file_cursor_;
  std::uint64_t committed_total_ = 0;

  friend SyscallResult exec_syscall(MachineState&, SyscallKind, World&);
};

// Argument registers: r1, r2, r3; result in r0.
//   RECV/FREAD  r1=buf r2=len r3=stream  -> bytes read (0 at end of stream)
//   SEND/FWRITE r1=addr r2=len           -> len
//   ALLOC r1=size r2=fixed address or 0  -> base
//   FREE r1=base                         -> 0
//   SPAWN r1=entry r2=arg (new thread r1) -> tid (filled in by the Vm)
//   WAIT/SIGNAL r1=event                 -> 0
//   EXIT r1=status
SyscallResult exec_syscall(MachineState& state, SyscallKind kind, World& world);

}  // namespace half
