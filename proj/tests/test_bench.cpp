#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "sfo/benchmark.hpp"
#include "sfo/errors.hpp"
#include "sfo/overhead.hpp"
#include "sfo/plotdata.hpp"

using namespace sfo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sfo_bench_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

// Drops the wall_seconds column.
std::string without_timing(const std::string& csv) {
  std::string out;
  for (const auto& l : lines(csv)) out += l.substr(0, l.rfind(',')) + "\n";
  return out;
}

json small_config() {
  return json::parse(R"({
    "schema_version": 1,
    "seed": 2,
    "passes": 3,
    "problem": {"kind": "logistic", "seed": 1, "samples": 200, "features": 6, "subfunctions": 5, "l2": 0.01},
    "optimizers": [{"name": "sfo"}, {"name": "sgd", "steps": [0.01, 0.1, 1.0]}, "lbfgs"]
  })");
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_run_config(small_config()));

  json j = small_config();
  j["bogus"] = 1;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["problem"]["kind"] = "cubic";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["passes"] = "many";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["passes"] = -1;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["schema_version"] = 2;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["optimizers"] = json::array();
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["optimizers"][1]["steps"] = {-1.0};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  j = small_config();
  j["problem"]["subfunctions"] = 500;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("config serialization round trips") {
  const RunConfig c = parse_run_config(small_config());
  const json once = to_json(c);
  const RunConfig again = parse_run_config(once);
  CHECK(to_json(again) == once);
  CHECK(again.passes == 3.0);
  CHECK(again.optimizers.size() == 3);
  CHECK(again.optimizers[1].steps == std::vector<double>{0.01, 0.1, 1.0});
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"logistic.json", "quadratic.json"}) {
    const fs::path p = fs::path(CONFIG_DIR) / name;
    CAPTURE(p.string());
    CHECK_NOTHROW(load_run_config(p));
  }
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("grids expand from optimizer entries") {
  OptimizerSpec s;
  s.method = Method::momentum;
  s.steps = {0.1, 1.0};
  s.momenta = {0.5};
  CHECK(grid_for(s).size() == 2);
  s.method = Method::sfo;
  CHECK(grid_for(s).size() == 1);
  s.method = Method::sag;
  s.steps.clear();
  CHECK(grid_for(s).size() == default_step_grid().size());
}

TEST_CASE("trace CSV format") {
  RunTrace t;
  t.run_id = "sgd-0";
  t.optimizer = "sgd";
  t.hyperparameters = "step=0.1";
  t.points = {{0, 0.0, 2.5, 0.0}, {10, 1.0, 0.1, 0.25}};
  const fs::path dir = scratch("csv");
  write_trace_csv(t, 0.05, dir / "a.csv");
  const auto rows = lines(slurp(dir / "a.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == kTraceHeader);
  CHECK(rows[1] == "sgd-0,sgd,step=0.1,0,0,2.5,2.4500000000000002,0");
  write_trace_csv(t, std::nullopt, dir / "b.csv");
  CHECK(lines(slurp(dir / "b.csv"))[2] == "sgd-0,sgd,step=0.1,10,1,0.10000000000000001,,0.25");

  const auto back = read_trace_csv(dir / "a.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].objective == 0.1);
  CHECK(*back[1].objective_minus_fstar == doctest::Approx(0.05));
  CHECK_FALSE(read_trace_csv(dir / "b.csv")[0].objective_minus_fstar.has_value());

  std::ofstream(dir / "bad.csv") << kTraceHeader << "\nonly,three,fields\n";
  CHECK_THROWS_AS(read_trace_csv(dir / "bad.csv"), IoError);
}

TEST_CASE("format_number keeps 17 significant digits") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("run_optimizer accounting") {
  const LogisticRegression p = make_logistic_regression(1, 100, 4, 5, 1e-2);
  TraceOptions o;
  o.passes = 4;
  const RunTrace t = run_optimizer(
      p, [](const ObjectiveProblem& c) { return std::make_unique<SfoStepper>(c, SfoConfig{}); }, o);
  CHECK(t.status == "ok");
  CHECK(t.evaluations == 20);
  CHECK(t.steps == 20);
  REQUIRE(t.points.size() == 5);
  for (std::size_t i = 1; i < t.points.size(); ++i) {
    CHECK(t.points[i].effective_passes >= t.points[i - 1].effective_passes);
    CHECK(t.points[i].effective_passes == doctest::Approx(static_cast<double>(i)));
  }

  // LBFGS spends N evaluations per full gradient and is stopped by the budget.
  BaselineConfig bc;
  bc.method = Method::lbfgs;
  const RunTrace l = run_optimizer(p, [&](const ObjectiveProblem& c) { return make_baseline(c, Vector::Zero(4), bc); }, o);
  CHECK(l.evaluations % 5 == 0);
  CHECK(l.evaluations >= 20);
}

TEST_CASE("zero-pass budget produces header-only traces") {
  RunConfig c = parse_run_config(small_config());
  c.passes = 0;
  const BenchmarkResult r = run_benchmark(c);
  const fs::path dir = scratch("empty");
  write_benchmark(r, c, dir);
  for (const auto& entry : fs::directory_iterator(dir / "traces")) {
    const auto rows = lines(slurp(entry.path()));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == kTraceHeader);
  }
  const json summary = json::parse(slurp(dir / "summary.json"));
  for (const auto& m : summary["methods"])
    for (const auto& run : m["runs"]) {
      CHECK(run["status"] == "empty");
      CHECK(run["final_objective"].is_null());
    }
}

TEST_CASE("identical configs give identical traces apart from timing") {
  const RunConfig c = parse_run_config(small_config());
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  write_benchmark(run_benchmark(c), c, a);
  write_benchmark(run_benchmark(c), c, b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a / "traces")) {
    const fs::path other = b / "traces" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(without_timing(slurp(entry.path())) == without_timing(slurp(other)));
    ++files;
  }
  CHECK(files == 5);
  CHECK(slurp(a / "config.json") == slurp(b / "config.json"));
}

TEST_CASE("sfo alone reaches the quadratic optimum") {
  const json j = json::parse(R"({
    "schema_version": 1, "passes": 15,
    "problem": {"kind": "quadratic", "seed": 3, "dimension": 20, "subfunctions": 10, "condition": 100},
    "optimizers": ["sfo"]
  })");
  const BenchmarkResult r = run_benchmark(parse_run_config(j));
  REQUIRE(r.fstar);
  CHECK(r.fstar_source == "analytic");
  const RunTrace& t = r.methods[0].runs[0];
  CHECK(t.final_objective() - *r.fstar <= 1e-8);
  const json s = summary_json(r);
  REQUIRE(s["sfo"].size() == 1);
  CHECK(s["sfo"][0]["steps"] == 150);
  CHECK(s["sfo"][0]["active_trace"].size() == 150);
  CHECK(s["sfo"][0].contains("bad_updates"));
}

TEST_CASE("separable problems fall back to the best observed objective") {
  const json j = json::parse(R"({
    "schema_version": 1, "passes": 2,
    "problem": {"kind": "separable", "dimension": 8, "subfunctions": 4},
    "optimizers": ["sfo", {"name": "adagrad", "steps": [0.1]}]
  })");
  const BenchmarkResult r = run_benchmark(parse_run_config(j));
  CHECK(r.fstar_source == "best_observed");
}

TEST_CASE("unwritable output directory fails before running") {
  const fs::path file = scratch("blocker") / "file";
  std::ofstream(file) << "x";
  CHECK_THROWS_AS(prepare_output_dir(file / "sub"), IoError);
}

TEST_CASE("plot data merging") {
  const RunConfig c = parse_run_config(small_config());
  const BenchmarkResult r = run_benchmark(c);
  const fs::path dir = scratch("plot");
  write_benchmark(r, c, dir);

  const auto rows = merge_traces(dir);
  std::size_t expected = 0;
  for (const auto& m : r.methods)
    for (const auto& t : m.runs) expected += t.points.size();
  CHECK(rows.size() == expected);

  // Best marking follows the grid selection.
  const auto& sgd = r.methods[1];
  const std::string best = sgd.runs[static_cast<std::size_t>(sgd.selection.best)].run_id;
  for (const PlotRow& p : rows) {
    if (p.row.run_id == best) CHECK(p.display == "best");
    if (p.row.optimizer == "sfo") CHECK(p.display == "best");
  }
  write_plot_data(rows, dir / "plot.csv");
  const auto out = lines(slurp(dir / "plot.csv"));
  CHECK(out[0] == kPlotHeader);
  CHECK(out.size() == expected + 1);

  // A stray trace and a missing one are both reported.
  fs::copy_file(dir / "traces" / "sgd-0.csv", dir / "traces" / "stray-0.csv");
  fs::remove(dir / "traces" / "sgd-1.csv");
  try {
    merge_traces(dir);
    FAIL("expected a merge error");
  } catch (const MergeError& e) {
    const std::string what = e.what();
    CHECK(what.find("sgd-1") != std::string::npos);
    CHECK(what.find("stray-0") != std::string::npos);
  }
  CHECK_THROWS_AS(merge_traces(dir / "missing"), IoError);
}

TEST_CASE("a single run merges to itself") {
  const json j = json::parse(R"({
    "schema_version": 1, "passes": 2,
    "problem": {"kind": "quadratic", "dimension": 5, "subfunctions": 3},
    "optimizers": ["sfo"]
  })");
  const RunConfig c = parse_run_config(j);
  const BenchmarkResult r = run_benchmark(c);
  const fs::path dir = scratch("single");
  write_benchmark(r, c, dir);
  const auto rows = merge_traces(dir);
  const auto trace = read_trace_csv(dir / "traces" / "sfo-0.csv");
  REQUIRE(rows.size() == trace.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].row.objective == trace[i].objective);
    CHECK(rows[i].display == "best");
  }
}

TEST_CASE("log-log slope fit") {
  CHECK(*fit_loglog_slope({1.0, 10.0, 100.0}, {2.0, 20.0, 200.0}) == doctest::Approx(1.0));
  CHECK(*fit_loglog_slope({10.0, 20.0, 40.0}, {1.0, 4.0, 16.0}) == doctest::Approx(2.0));
  CHECK_FALSE(fit_loglog_slope({5.0}, {1.0}).has_value());
  CHECK_FALSE(fit_loglog_slope({5.0, 5.0}, {1.0, 2.0}).has_value());
}

TEST_CASE("overhead measurement on tiny sizes") {
  OverheadOptions o;
  o.m_list = {50};
  o.n_list = {3, 6};
  o.fixed_n = 3;
  o.fixed_m = 50;
  o.repeats = 2;
  o.min_repeat_seconds = 0.001;
  const OverheadResult r = measure_overhead(o);
  CHECK(r.points.size() == 3);
  CHECK_FALSE(r.slope_m.has_value());
  CHECK(r.slope_n.has_value());
  for (const auto& p : r.points) CHECK(p.seconds_per_pass > 0.0);
  const fs::path dir = scratch("overhead");
  write_overhead(r, dir);
  CHECK(lines(slurp(dir / "overhead.csv")).size() == 4);
  const json fit = json::parse(slurp(dir / "overhead_fit.json"));
  CHECK(fit.contains("slope_m"));
}
