// bench: benchmark harness for SFO and the baseline optimizers.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfo/benchmark.hpp"
#include "sfo/errors.hpp"
#include "sfo/overhead.hpp"
#include "sfo/plotdata.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

std::vector<sfo::Index> parse_sizes(const std::string& text, const char* flag) {
  std::vector<sfo::Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v >= 1.0) || v != std::floor(v))
      throw sfo::ConfigError(std::string(flag) + ": '" + item + "' is not a positive integer");
    out.push_back(static_cast<sfo::Index>(v));
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::optional<std::string>& out, const std::optional<double>& passes, bool quiet) {
  sfo::RunConfig config = sfo::load_run_config(config_path);
  if (seed) config.seed = *seed;
  if (out) config.output_dir = *out;
  if (passes) {
    if (!(*passes >= 0.0)) throw sfo::ConfigError("--passes must be >= 0");
    config.passes = *passes;
  }
  sfo::prepare_output_dir(config.output_dir);

  const sfo::BenchmarkResult result = sfo::run_benchmark(config);
  sfo::write_benchmark(result, config, config.output_dir);
  if (!quiet) {
    std::printf("problem: %s\n", result.problem.c_str());
    if (result.fstar)
      std::printf("F* = %.17g (%s)\n", *result.fstar, result.fstar_source.c_str());
    for (const auto& m : result.methods) {
      const auto& best = m.runs[static_cast<std::size_t>(m.selection.best)];
      const double f = best.final_objective();
      std::printf("%-9s best %-32s F = %.10g", sfo::to_string(m.method).c_str(),
                  best.hyperparameters.c_str(), f);
      if (result.fstar) std::printf("  F - F* = %.3e", f - *result.fstar);
      std::printf("\n");
    }
    for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %s\n", config.output_dir.string().c_str());
  }
  return kOk;
}

int cmd_overhead(const std::string& m_list, const std::string& n_list, sfo::Index fixed_n,
                 sfo::Index fixed_m, int repeats, std::uint64_t seed, const std::string& out,
                 bool quiet) {
  sfo::OverheadOptions options;
  options.m_list = parse_sizes(m_list, "--m-list");
  options.n_list = parse_sizes(n_list, "--n-list");
  options.fixed_n = fixed_n;
  options.fixed_m = fixed_m;
  options.repeats = repeats;
  options.seed = seed;
  if (repeats < 1) throw sfo::ConfigError("--repeats must be at least 1");
  if (fixed_n < 1 || fixed_m < 1) throw sfo::ConfigError("--fixed-n and --fixed-m must be positive");

  const sfo::OverheadResult result = sfo::measure_overhead(options);
  sfo::write_overhead(result, out);
  if (!quiet) {
    for (const auto& p : result.points)
      std::printf("%s  M=%-7ld N=%-4ld %.6e s/pass  spread %.2f%s\n", p.sweep.c_str(),
                  static_cast<long>(p.m), static_cast<long>(p.n), p.seconds_per_pass, p.spread,
                  p.reliable ? "" : "  (unreliable)");
    auto show = [](const char* name, const std::optional<double>& s) {
      if (s)
        std::printf("slope in %s: %.3f\n", name, *s);
      else
        std::printf("slope in %s: n/a\n", name);
    };
    show("M", result.slope_m);
    show("N", result.slope_n);
  }
  return kOk;
}

int cmd_plotdata(const std::string& dir, const std::optional<std::string>& out, bool quiet) {
  const auto rows = sfo::merge_traces(dir);
  const std::filesystem::path target = out ? std::filesystem::path(*out)
                                           : std::filesystem::path(dir) / "plotdata.csv";
  sfo::write_plot_data(rows, target);
  if (!quiet) std::printf("wrote %zu rows to %s\n", rows.size(), target.string().c_str());
  return kOk;
}

int cmd_gradcheck(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                  int points, double step, double tolerance, bool quiet) {
  const sfo::RunConfig config = sfo::load_run_config(config_path);
  const auto problem = sfo::build_problem(config.problem);
  std::mt19937_64 rng(seed.value_or(config.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    sfo::Vector x(problem->dimension());
    for (sfo::Index k = 0; k < x.size(); ++k) x(k) = normal(rng);
    const auto i = static_cast<sfo::Index>(rng() % static_cast<std::uint64_t>(problem->subfunction_count()));
    worst = std::max(worst, sfo::check_gradient(*problem, i, x, step));
  }
  const bool pass = worst <= tolerance;
  if (!quiet)
    std::printf("%s: max relative gradient error %.3e over %d points (tolerance %.1e) %s\n",
                problem->description().c_str(), worst, points, tolerance, pass ? "PASS" : "FAIL");
  return pass ? kOk : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmarks the sum-of-functions optimizer against baseline optimizers."};
  app.require_subcommand(1);

  bool quiet = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> passes;
  std::string path;

  auto* run = app.add_subcommand("run", "Run every optimizer in a config and write traces");
  run->add_option("config", path, "JSON run config")->required();
  run->add_option("--seed", seed, "Override the global seed");
  run->add_option("--out", out, "Override the output directory");
  run->add_option("--passes", passes, "Override the effective-pass budget");
  run->add_flag("--quiet", quiet, "Suppress the summary");

  std::string m_list = "1000,10000,100000";
  std::string n_list = "10,20,40";
  sfo::Index fixed_n = 20;
  sfo::Index fixed_m = 10000;
  int repeats = 5;
  std::uint64_t overhead_seed = 0;
  std::string overhead_out = "overhead_out";
  auto* overhead = app.add_subcommand("overhead", "Measure optimizer cost per pass against M and N");
  overhead->add_option("--m-list", m_list, "Comma-separated M values (at --fixed-n)");
  overhead->add_option("--n-list", n_list, "Comma-separated N values (at --fixed-m)");
  overhead->add_option("--fixed-n", fixed_n, "N used for the M sweep");
  overhead->add_option("--fixed-m", fixed_m, "M used for the N sweep");
  overhead->add_option("--repeats", repeats, "Timed repeats per point (median reported)");
  overhead->add_option("--seed", overhead_seed, "Problem and optimizer seed");
  overhead->add_option("--out", overhead_out, "Output directory");
  overhead->add_flag("--quiet", quiet, "Suppress the table");

  std::optional<std::string> plot_out;
  auto* plot = app.add_subcommand("plotdata", "Merge a run directory into one long-form CSV");
  plot->add_option("dir", path, "Output directory of `bench run`")->required();
  plot->add_option("--out", plot_out, "Target file (default <dir>/plotdata.csv)");
  plot->add_flag("--quiet", quiet, "Suppress the summary");

  int points = 100;
  double step = 1e-6;
  double tolerance = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "Check analytic gradients against central differences");
  grad->add_option("config", path, "JSON run config (its problem is checked)")->required();
  grad->add_option("--seed", seed, "Seed for the sampled points");
  grad->add_option("--points", points, "Number of random (subfunction, x) samples");
  grad->add_option("--step", step, "Finite-difference step");
  grad->add_option("--tolerance", tolerance, "Maximum relative error");
  grad->add_flag("--quiet", quiet, "Suppress the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (*run) return cmd_run(path, seed, out, passes, quiet);
    if (*overhead)
      return cmd_overhead(m_list, n_list, fixed_n, fixed_m, repeats, overhead_seed, overhead_out,
                          quiet);
    if (*plot) return cmd_plotdata(path, plot_out, quiet);
    if (*grad) return cmd_gradcheck(path, seed, points, step, tolerance, quiet);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
