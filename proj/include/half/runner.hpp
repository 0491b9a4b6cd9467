// Experiment runner: wires VM, recorder, channels, workers, shadow memory and
// sync state together for one run, and turns the result into a report.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "half/oracle.hpp"
#include "half/report.hpp"
#include "half/shadow_memory.hpp"
#include "half/workloads.hpp"

namespace half {

enum class Scheme : std::uint8_t { Mirror, Prealloc };
std::string_view to_string(Scheme s);
Scheme parse_scheme(const std::string& s);  // throws std::invalid_argument

struct ExperimentConfig {
  std::string workload;
  Scheme scheme = Scheme::Mirror;
  std::size_t buffer_entries = 65536;
  std::size_t buffers_per_thread = 2;
  std::size_t guard = 1;
  bool sync_submit = true;
  bool record_only = false;
  bool oracle = false;
  bool deterministic = false;
  std::uint64_t seed = 1;
  std::uint64_t throttle = 0;
  bool halt_on_alert = false;
  std::string spill_file;
  std::size_t high_water_pages = 16384;
  Addr prealloc_base = kPreallocBase;
  std::string report_path;
  bool dump_analysis_code = false;
};

// Throws std::invalid_argument on an inconsistent config.
void validate(const ExperimentConfig& cfg);

struct ExperimentResult {
  MetricsReport report;
  // Decoupled results in the oracle's shape, for compare().
  TaintGroundTruth observed;
  std::optional<Diff> oracle_diff;
  std::string analysis_dump;
  std::vector<std::uint8_t> file_out;
  std::vector<std::uint8_t> net_out;
};

ExperimentResult run_experiment(const Workload& w, const ExperimentConfig& cfg);
// Resolves cfg.workload through make_workload.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Coupled oracle run of the same workload, world setup and seed.
struct OracleRun {
  MetricsReport report;
  TaintGroundTruth truth;
};
OracleRun run_oracle(const Workload& w, const ExperimentConfig& cfg);

int exit_code_for(const MetricsReport& r, bool halt_on_alert);

enum class SweepAxis : std::uint8_t { BufferEntries, Scheme, SyncSubmit, Throttle };
SweepAxis parse_axis(const std::string& s);  // throws std::invalid_argument
std::string_view to_string(SweepAxis a);

struct SweepRow {
  std::string value;
  MetricsReport report;
};

// values are given in CLI form ("1024", "mirror", "on", ...).
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values);
std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);
nlohmann::ordered_json sweep_json(SweepAxis axis, const std::vector<SweepRow>& rows);

// Field-by-field comparison of two reports. `taint_equal` covers the fields
// an oracle comparison cares about (rb, cb, db, alerts, digests).
struct ReportDiff {
  std::vector<std::string> lines;
  bool taint_equal = true;
};
ReportDiff diff_reports(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace half
