#include "half/report.hpp"

namespace half {

namespace {
constexpr const char* kSubmitNames[4] = {"full", "sync_wait", "sync_signal", "thread_exit"};
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "half-report/1";
  j["workload"] = r.workload;
  j["mode"] = r.mode;
  j["config"] = {{"scheme", r.scheme},
                 {"seed", r.seed},
                 {"buffer_entries", r.buffer_entries},
                 {"buffers_per_thread", r.buffers_per_thread},
                 {"sync_submit", r.sync_submit},
                 {"deterministic", r.deterministic},
                 {"throttle", r.throttle}};
  j["status"] = r.status;
  j["fault"] = r.fault;
  j["message"] = r.message;
  j["exit_code"] = r.exit_code;
  j["pi"] = r.pi;
  j["am_bytes"] = r.am_bytes;
  j["bf"] = r.bf;
  j["tf"] = r.tf;
  j["tc"] = r.tc;
  j["cf"] = r.cf;
  j["rb"] = r.rb;
  j["cb"] = r.cb;
  j["db"] = r.db;
  j["wsn"] = r.wsn;
  j["ssn"] = r.ssn;
  j["cfn"] = r.cfn;
  j["dfn"] = r.dfn;
  j["gsr"] = r.gsr;
  j["blocks"] = r.blocks;
  j["blocks_executed"] = r.blocks_executed;
  j["instructions"] = r.instructions;
  j["instructions_instrumented"] = r.instructions_instrumented;
  j["threads"] = r.threads;
  j["steps"] = r.steps;
  j["record_words"] = r.record_words;
  nlohmann::ordered_json subs;
  for (int i = 0; i < 4; ++i) subs[kSubmitNames[i]] = r.submissions[i];
  j["submissions"] = subs;
  j["logical_time"] = r.logical_time;
  j["shadow"] = {{"committed_pages", r.shadow_committed_pages},
                 {"peak_pages", r.shadow_peak_pages},
                 {"committed_bytes", r.shadow_committed_bytes},
                 {"reserved_in_target_bytes", r.shadow_reserved_bytes},
                 {"spilled_pages", r.shadow_spilled_pages},
                 {"reloads", r.shadow_reloads}};
  j["alerts"] = r.alerts;
  j["payload_executed"] = r.payload_executed;
  j["digests"] = {{"shadow", r.shadow_digest}, {"registers", r.register_digest}};
  if (r.wall_ms) j["wall_ms"] = *r.wall_ms;
  if (r.target_wall_ms) j["target_wall_ms"] = *r.target_wall_ms;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.workload = j.at("workload");
  r.mode = j.at("mode");
  const auto& c = j.at("config");
  r.scheme = c.at("scheme");
  r.seed = c.at("seed");
  r.buffer_entries = c.at("buffer_entries");
  r.buffers_per_thread = c.at("buffers_per_thread");
  r.sync_submit = c.at("sync_submit");
  r.deterministic = c.at("deterministic");
  r.throttle = c.at("throttle");
  r.status = j.at("status");
  r.fault = j.at("fault");
  r.message = j.at("message");
  r.exit_code = j.at("exit_code");
  r.pi = j.at("pi");
  r.am_bytes = j.at("am_bytes");
  r.bf = j.at("bf");
  r.tf = j.at("tf");
  r.tc = j.at("tc");
  r.cf = j.at("cf");
  r.rb = j.at("rb");
  r.cb = j.at("cb");
  r.db = j.at("db");
  r.wsn = j.at("wsn");
  r.ssn = j.at("ssn");
  r.cfn = j.at("cfn");
  r.dfn = j.at("dfn");
  r.gsr = j.at("gsr");
  r.blocks = j.at("blocks");
  r.blocks_executed = j.at("blocks_executed");
  r.instructions = j.at("instructions");
  r.instructions_instrumented = j.at("instructions_instrumented");
  r.threads = j.at("threads");
  r.steps = j.at("steps");
  r.record_words = j.at("record_words");
  for (int i = 0; i < 4; ++i) r.submissions[i] = j.at("submissions").at(kSubmitNames[i]);
  r.logical_time = j.at("logical_time");
  const auto& s = j.at("shadow");
  r.shadow_committed_pages = s.at("committed_pages");
  r.shadow_peak_pages = s.at("peak_pages");
  r.shadow_committed_bytes = s.at("committed_bytes");
  r.shadow_reserved_bytes = s.at("reserved_in_target_bytes");
  r.shadow_spilled_pages = s.at("spilled_pages");
  r.shadow_reloads = s.at("reloads");
  r.alerts = j.at("alerts");
  r.payload_executed = j.at("payload_executed");
  r.shadow_digest = j.at("digests").at("shadow");
  r.register_digest = j.at("digests").at("registers");
  if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
  if (j.contains("target_wall_ms")) r.target_wall_ms = j.at("target_wall_ms").get<double>();
  return r;
}

std::string report_to_string(const MetricsReport& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace half
