// The run report and its JSON form. Field names follow the metric
// abbreviations used throughout (pi, am_bytes, bf, ...).

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace half {

struct MetricsReport {
  std::string workload;
  std::string mode;    // decoupled | oracle | record-only
  std::string scheme;  // mirror | prealloc
  std::uint64_t seed = 0;
  std::uint64_t buffer_entries = 0;
  std::uint64_t buffers_per_thread = 0;
  bool sync_submit = true;
  bool deterministic = false;
  std::uint64_t throttle = 0;

  std::string status = "ok";  // ok | fault | interrupted | step-limit | worker-fault
  std::string fault;
  std::string message;
  int exit_code = 0;

  double pi = 0;
  std::uint64_t am_bytes = 0;
  std::uint64_t bf = 0;
  std::uint64_t tf = 0;
  std::uint64_t tc = 0;
  std::uint64_t cf = 0;
  std::uint64_t rb = 0, cb = 0, db = 0;
  std::uint64_t wsn = 0, ssn = 0, cfn = 0, dfn = 0;
  double gsr = 1.0;

  std::uint64_t blocks = 0;
  std::uint64_t blocks_executed = 0;
  std::uint64_t instructions = 0;
  std::uint64_t instructions_instrumented = 0;
  std::uint64_t threads = 0;
  std::uint64_t steps = 0;
  std::uint64_t record_words = 0;
  std::array<std::uint64_t, 4> submissions{};  // Full, SyncWait, SyncSignal, ThreadExit
  std::uint64_t logical_time = 0;

  std::uint64_t shadow_committed_pages = 0;
  std::uint64_t shadow_peak_pages = 0;
  std::uint64_t shadow_committed_bytes = 0;
  std::uint64_t shadow_reserved_bytes = 0;
  std::uint64_t shadow_spilled_pages = 0;
  std::uint64_t shadow_reloads = 0;

  std::uint64_t alerts = 0;
  bool payload_executed = false;
  std::uint64_t shadow_digest = 0;
  std::uint64_t register_digest = 0;

  std::optional<double> wall_ms;         // omitted in deterministic mode
  std::optional<double> target_wall_ms;  // target run segment
};

// Per-switch cost charged to logical time, standing in for the trap and
// buffer handoff of a real guard-page switch.
inline constexpr std::uint64_t kSwitchCost = 256;

nlohmann::ordered_json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);
std::string report_to_string(const MetricsReport& r);  // pretty, trailing newline

}  // namespace half
