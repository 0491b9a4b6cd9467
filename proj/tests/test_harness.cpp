#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "half/runner.hpp"
#include "half/workloads.hpp"

using namespace half;

namespace {

ExperimentConfig det(const std::string& id) {
  ExperimentConfig cfg;
  cfg.workload = id;
  cfg.deterministic = true;
  return cfg;
}

}  // namespace

TEST_CASE("catalog") {
  const auto cat = workload_catalog();
  std::set<std::string> ids;
  for (const auto& c : cat) {
    ids.insert(c.id);
    CHECK_FALSE(c.description.empty());
  }
  for (const char* want : {"downloader", "downloader-mix", "producer-consumer", "adversarial", "heap-spray", "beacon",
                           "membound", "sparse"})
    CHECK(ids.count(want) == 1);

  try {
    make_workload("no-such-workload");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("no-such-workload") != std::string::npos);
    CHECK(msg.find("downloader") != std::string::npos);
    CHECK(msg.find("membound") != std::string::npos);
  }
  CHECK_THROWS_AS(make_workload("random:x"), std::invalid_argument);
  CHECK_THROWS_AS(make_workload("random:"), std::invalid_argument);
}

TEST_CASE("declared thread counts match SPAWNs") {
  for (const auto& c : workload_catalog()) {
    if (c.id.find('<') != std::string::npos) continue;
    const Workload w = make_workload(c.id);
    CHECK_MESSAGE(w.threads == count_spawns(w.program) + 1, c.id);
  }
  for (std::uint64_t s = 1; s <= 300; ++s) {
    const Workload w = generate_random_workload(s);
    CHECK(w.threads == count_spawns(w.program) + 1);
    CHECK(w.threads <= 4);
    CHECK(w.program.size() <= 500);
    const auto r = run_experiment(w, det(w.id)).report;
    CHECK(r.threads == w.threads);
  }
}

TEST_CASE("random generator respects its limits") {
  RandomProgramLimits lim;
  lim.max_threads = 2;
  lim.max_instructions = 300;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    const Workload w = generate_random_workload(s, lim);
    CHECK(w.threads <= 2);
    CHECK(w.program.size() <= 300);
  }
  CHECK(generate_random_workload(5).source == generate_random_workload(5).source);
  CHECK(generate_random_workload(5).source != generate_random_workload(6).source);
}

TEST_CASE("deterministic reports are byte-identical") {
  std::vector<std::string> ids;
  for (const auto& c : workload_catalog())
    if (c.id.find('<') == std::string::npos) ids.push_back(c.id);
  ids.push_back("random:11");
  for (const auto& id : ids) {
    auto cfg = det(id);
    cfg.buffer_entries = 1024;
    const auto a = report_to_string(run_experiment(cfg).report);
    const auto b = report_to_string(run_experiment(cfg).report);
    CHECK_MESSAGE(a == b, id);
    CHECK(a.find("wall_ms") == std::string::npos);
  }
}

TEST_CASE("report JSON round-trips") {
  auto cfg = det("producer-consumer");
  const auto r = run_experiment(cfg).report;
  const auto j = to_json(r);
  CHECK(to_json(report_from_json(nlohmann::json::parse(j.dump()))) == j);
}

TEST_CASE("documented runs") {
  SUBCASE("downloader copy path") {
    const auto r = run_experiment(det("downloader")).report;
    CHECK(r.rb == 10240);
    CHECK(r.cb == 10240);
    CHECK(r.db == 10240);
    CHECK(r.exit_code == 0);
  }
  SUBCASE("heap-spray under both schemes") {
    auto cfg = det("heap-spray");
    const auto mirror = run_experiment(cfg).report;
    CHECK(mirror.status == "ok");
    CHECK(mirror.payload_executed);
    CHECK(mirror.shadow_reserved_bytes == 0);
    cfg.scheme = Scheme::Prealloc;
    const auto pre = run_experiment(cfg).report;
    CHECK(pre.status == "fault");
    CHECK(pre.fault == "AddressConflict");
    CHECK_FALSE(pre.payload_executed);
    CHECK(pre.exit_code == 3);
  }
  SUBCASE("beacon halts on the alert") {
    auto cfg = det("beacon");
    cfg.halt_on_alert = true;
    const auto r = run_experiment(cfg).report;
    CHECK(r.alerts >= 1);
    CHECK(r.exit_code == 2);
  }
  SUBCASE("record-only skips analysis") {
    auto cfg = det("downloader");
    cfg.record_only = true;
    const auto r = run_experiment(cfg).report;
    CHECK(r.mode == "record-only");
    CHECK(r.rb == 0);
    CHECK(r.blocks_executed == 0);
    CHECK(r.record_words > 0);
  }
  SUBCASE("tiny high-water mark spills and reloads") {
    auto cfg = det("downloader");
    cfg.high_water_pages = 1;
    const auto r = run_experiment(cfg).report;
    CHECK(r.status == "ok");
    CHECK(r.db == 10240);
    CHECK(r.shadow_reloads > 0);
    CHECK(r.cf >= r.shadow_reloads);
  }
}

TEST_CASE("config validation") {
  auto cfg = det("downloader");
  cfg.buffers_per_thread = 1;
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
  cfg = det("downloader");
  cfg.buffer_entries = 1;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = det("downloader");
  cfg.record_only = cfg.oracle = true;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = det("downloader");
  cfg.scheme = Scheme::Prealloc;
  cfg.prealloc_base = 0;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  CHECK_THROWS_AS(parse_scheme("compressed"), std::invalid_argument);
  CHECK_THROWS_AS(parse_axis("colour"), std::invalid_argument);
}

TEST_CASE("exit codes") {
  MetricsReport r;
  CHECK(exit_code_for(r, false) == 0);
  r.alerts = 3;
  CHECK(exit_code_for(r, false) == 0);
  CHECK(exit_code_for(r, true) == 2);
  r.status = "fault";
  r.fault = "AddressConflict";
  CHECK(exit_code_for(r, true) == 3);
  r.fault = "UnmappedMemory";
  CHECK(exit_code_for(r, false) == 1);
  r.status = "worker-fault";
  r.fault.clear();
  CHECK(exit_code_for(r, false) == 1);
}

TEST_CASE("sweeps") {
  SUBCASE("buffer entries: one row per value, BF monotone") {
    const auto rows = run_sweep(det("membound"), SweepAxis::BufferEntries, {"1024", "4096", "8192", "65536"});
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].report.bf < rows[i - 1].report.bf);
    const auto csv = sweep_csv(SweepAxis::BufferEntries, rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("wall_ms") != std::string::npos);
    CHECK(csv.find(",bf,cf,gsr,") != std::string::npos);
    CHECK(sweep_json(SweepAxis::BufferEntries, rows)["rows"].size() == 4);
  }
  SUBCASE("sync submission on the adversarial workload") {
    const auto rows = run_sweep(det("adversarial"), SweepAxis::SyncSubmit, {"on", "off"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].report.gsr == 1.0);
    CHECK(rows[0].report.gsr >= rows[1].report.gsr);
  }
  SUBCASE("scheme on the sparse workload") {
    const auto rows = run_sweep(det("sparse"), SweepAxis::Scheme, {"mirror", "prealloc"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].report.shadow_reserved_bytes == 0);
    CHECK(rows[0].report.shadow_committed_bytes * 100 < rows[1].report.shadow_reserved_bytes);
  }
  SUBCASE("throttle") {
    const auto rows = run_sweep(det("producer-consumer"), SweepAxis::Throttle, {"0", "50"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].report.throttle == 50);
    CHECK(rows[1].report.steps >= rows[0].report.steps);
  }
  SUBCASE("bad values") {
    CHECK_THROWS(run_sweep(det("membound"), SweepAxis::BufferEntries, {"lots"}));
    CHECK_THROWS(run_sweep(det("membound"), SweepAxis::SyncSubmit, {"maybe"}));
  }
}

TEST_CASE("diff_reports") {
  auto cfg = det("downloader-mix");
  const auto a = to_json(run_experiment(cfg).report);
  cfg.buffer_entries = 64;
  const auto b = to_json(run_experiment(cfg).report);
  const auto same = diff_reports(nlohmann::json::parse(a.dump()), nlohmann::json::parse(b.dump()));
  CHECK(same.taint_equal);
  CHECK_FALSE(same.lines.empty());  // bf differs

  auto c = nlohmann::json::parse(a.dump());
  c["db"] = 1;
  const auto d = diff_reports(nlohmann::json::parse(a.dump()), c);
  CHECK_FALSE(d.taint_equal);
  bool names_db = false;
  for (const auto& l : d.lines) names_db |= l.find("db") != std::string::npos;
  CHECK(names_db);
}
