// half: run decoupled taint experiments on the toy VM.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "half/runner.hpp"

using namespace half;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(f);
}

void add_run_options(CLI::App* app, ExperimentConfig& cfg, std::string& scheme, std::string& sync) {
  app->add_option("--scheme", scheme, "Shadow scheme")->check(CLI::IsMember({"mirror", "prealloc"}));
  app->add_option("--buffer-entries", cfg.buffer_entries, "Record buffer capacity in words");
  app->add_option("--buffers-per-thread", cfg.buffers_per_thread, "Record buffers per thread");
  app->add_option("--sync-submit", sync, "Submit record buffers at WAIT/SIGNAL")->check(CLI::IsMember({"on", "off"}));
  app->add_flag("--record-only", cfg.record_only, "Record without analysis");
  app->add_flag("--deterministic", cfg.deterministic, "Single OS thread, seeded analysis points");
  app->add_option("--seed", cfg.seed, "Scheduler seed");
  app->add_option("--throttle", cfg.throttle, "Scheduler steps a thread sleeps after each RECV/FREAD");
  app->add_flag("--halt-on-alert", cfg.halt_on_alert, "Stop the target after the first alert");
  app->add_option("--spill-file", cfg.spill_file, "Shadow spill file (default: anonymous temp file)");
  app->add_option("--high-water-pages", cfg.high_water_pages, "Committed shadow pages before spilling");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"half: decoupled taint analysis on a toy VM"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string scheme = "mirror";
  std::string sync = "on";

  auto* run = app.add_subcommand("run", "Run one experiment and write its report");
  run->add_option("workload", cfg.workload, "Workload id (see `list`)")->required();
  add_run_options(run, cfg, scheme, sync);
  run->add_flag("--oracle", cfg.oracle, "Emit the coupled oracle's report; exit 4 if the decoupled run differs");
  run->add_option("--report", cfg.report_path, "Write the report here instead of stdout");
  run->add_flag("--dump-analysis-code", cfg.dump_analysis_code, "Print the generated analysis blocks to stderr");
  std::string alert_log;
  run->add_option("--alert-log", alert_log, "Write alerts here, one JSON object per line");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of an axis");
  std::string axis;
  std::vector<std::string> values;
  std::string csv_path, json_path;
  sweep->add_option("workload", cfg.workload, "Workload id")->required();
  sweep->add_option("--axis", axis, "buffer-entries|scheme|sync-submit|throttle")->required();
  sweep->add_option("--values", values, "Axis values")->required()->delimiter(',');
  sweep->add_option("--csv", csv_path, "CSV summary path (default: stdout)");
  sweep->add_option("--json", json_path, "JSON summary path");
  add_run_options(sweep, cfg, scheme, sync);

  auto* list = app.add_subcommand("list", "List built-in workloads");
  bool list_json = false;
  list->add_flag("--json", list_json, "Machine-readable output");

  auto* diff = app.add_subcommand("diff", "Compare two reports");
  std::string report_a, report_b;
  diff->add_option("report_a", report_a)->required();
  diff->add_option("report_b", report_b)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.scheme = parse_scheme(scheme);
    cfg.sync_submit = sync == "on";

    if (*list) {
      const auto cat = workload_catalog();
      if (list_json) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& c : cat) j.push_back({{"id", c.id}, {"description", c.description}});
        std::cout << j.dump(2) << "\n";
      } else {
        for (const auto& c : cat) std::cout << c.id << "\t" << c.description << "\n";
      }
      return 0;
    }

    if (*diff) {
      const auto d = diff_reports(read_json(report_a), read_json(report_b));
      for (const auto& l : d.lines) std::cout << l << "\n";
      std::cout << (d.taint_equal ? "taint results identical" : "taint results differ") << "\n";
      return d.taint_equal ? 0 : 4;
    }

    if (*sweep) {
      const auto rows = run_sweep(cfg, parse_axis(axis), values);
      const auto csv = sweep_csv(parse_axis(axis), rows);
      if (csv_path.empty()) std::cout << csv;
      else write_file(csv_path, csv);
      if (!json_path.empty()) write_file(json_path, sweep_json(parse_axis(axis), rows).dump(2) + "\n");
      return 0;
    }

    const auto res = run_experiment(cfg);
    if (cfg.dump_analysis_code) std::cerr << res.analysis_dump;
    if (res.oracle_diff && *res.oracle_diff) std::cerr << "oracle mismatch: " << res.oracle_diff->first << "\n";
    if (!res.report.message.empty() && res.report.status != "ok") std::cerr << res.report.message << "\n";
    if (!alert_log.empty()) {
      std::string lines;
      for (const auto& a : res.observed.alerts) lines += alert_to_json_line(a) + "\n";
      write_file(alert_log, lines);
    }
    const auto text = report_to_string(res.report);
    if (cfg.report_path.empty()) std::cout << text;
    else write_file(cfg.report_path, text);
    return res.report.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "half: " << e.what() << "\n";
    return 1;
  }
}
