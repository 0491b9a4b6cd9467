// Built-in workload corpus and the random-program generator.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "half/instrumenter.hpp"
#include "half/oracle.hpp"

namespace half {

struct Workload {
  std::string id;
  std::string description;
  std::string source;
  Program program;
  WorldSetup setup;
  TaskBindings bindings;
  std::size_t threads = 1;      // declared thread count
  std::string payload_marker;   // nonempty: payload_executed iff the file sink contains it
};

struct CatalogEntry {
  std::string id;
  std::string description;
};

std::vector<CatalogEntry> workload_catalog();

// Known ids plus "random:<seed>". Throws std::invalid_argument naming the
// valid ids for anything else.
Workload make_workload(const std::string& id);

struct RandomProgramLimits {
  std::size_t max_instructions = 500;
  std::size_t max_threads = 4;
  std::size_t max_sources = 3;
  std::size_t max_sinks = 3;
};

Workload generate_random_workload(std::uint64_t seed, const RandomProgramLimits& limits = {});

// Counts SPAWN instructions reachable in the source text (declared-thread check).
std::size_t count_spawns(const Program& p);

// Fixed addresses used by workloads.
inline constexpr Addr kSprayFixedAddr = 0x2400'0000;
inline constexpr std::size_t kSparsePages = 100;

}  // namespace half
