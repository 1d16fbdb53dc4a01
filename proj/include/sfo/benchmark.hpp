#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfo/baselines.hpp"
#include "sfo/problem.hpp"
#include "sfo/trace.hpp"

namespace sfo {

inline constexpr int kConfigSchemaVersion = 1;

enum class ProblemKind { logistic, quadratic, separable };

struct ProblemSpec {
  ProblemKind kind = ProblemKind::logistic;
  std::uint64_t seed = 1;
  // logistic
  Index samples = 2000;
  Index features = 100;
  double l2 = 1e-3;
  double label_noise = 0.1;
  double feature_spread = 3.0;
  // quadratic / separable
  Index dimension = 20;
  double condition = 100.0;
  Index subfunctions = 20;
};

struct OptimizerSpec {
  Method method = Method::sfo;
  /// Empty means the default grid.
  std::vector<double> steps;
  std::vector<double> momenta;
  SampleOrder order = SampleOrder::uniform;
  Index history = 10;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  ProblemSpec problem;
  std::vector<OptimizerSpec> optimizers;
  double passes = 30.0;
  long sample_every = 0;
  /// Standard deviation of the seeded Gaussian start; 0 starts at zero.
  double initial_scale = 0.0;
  std::filesystem::path output_dir = "bench_out";
  std::uint64_t seed = 0;
};

/// Strict parsing: unknown keys, wrong types and out-of-range values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

std::unique_ptr<ObjectiveProblem> build_problem(const ProblemSpec& spec);
Vector initial_position(const RunConfig& config, Index dimension);
/// The grid an optimizer entry expands to.
std::vector<GridPoint> grid_for(const OptimizerSpec& spec);

struct MethodResult {
  Method method = Method::sfo;
  std::vector<GridPoint> grid;
  std::vector<RunTrace> runs;
  GridSelection selection;
};

struct BenchmarkResult {
  std::string problem;
  std::optional<double> fstar;
  /// "analytic", "derived", "best_observed" or "none".
  std::string fstar_source = "none";
  std::vector<MethodResult> methods;
  std::vector<std::string> warnings;
};

/// Runs every optimizer entry (grids for baselines, a single run for SFO and
/// LBFGS) without writing anything.
BenchmarkResult run_benchmark(const RunConfig& config);

/// Writes traces/<run_id>.csv, summary.json and config.json under `dir`.
void write_benchmark(const BenchmarkResult& result, const RunConfig& config,
                     const std::filesystem::path& dir);

/// Creates `dir` and checks that it accepts files. Throws IoError.
void prepare_output_dir(const std::filesystem::path& dir);

nlohmann::json summary_json(const BenchmarkResult& result);

}  // namespace sfo
