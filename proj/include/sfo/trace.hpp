#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfo/baselines.hpp"
#include "sfo/problem.hpp"
#include "sfo/stepping.hpp"

namespace sfo {

struct TracePoint {
  long step = 0;
  double effective_passes = 0.0;
  double objective = 0.0;
  double wall_seconds = 0.0;
};

struct RunTrace {
  std::string run_id;
  std::string optimizer;
  std::string hyperparameters;
  std::vector<TracePoint> points;
  std::string status = "ok";
  std::uint64_t evaluations = 0;
  long steps = 0;
  /// SFO only.
  std::optional<Index> bad_updates;
  std::vector<Index> active_trace;

  /// Objective at the last sample, +inf for failed or empty runs.
  double final_objective() const;
};

struct TraceOptions {
  double passes = 1.0;
  /// Sample F every this many steps; 0 samples whenever another full pass
  /// of evaluations completes.
  long sample_every = 0;
};

using OptimizerFactory =
    std::function<std::unique_ptr<SteppingOptimizer>(const ObjectiveProblem& counted)>;

/// Drives one optimizer until passes * N subfunction evaluations have been
/// spent (counted by the harness) or the optimizer finishes. F is sampled
/// on the uncounted problem and excluded from wall time. Exceptions thrown
/// by the optimizer end the run with an error status.
RunTrace run_optimizer(const ObjectiveProblem& problem, const OptimizerFactory& make,
                       const TraceOptions& options);

inline constexpr const char* kTraceHeader =
    "run_id,optimizer,hyperparams,step,effective_passes,objective,objective_minus_fstar,"
    "wall_seconds";

/// Numbers with 17 significant digits; objective_minus_fstar left empty
/// without an optimum.
void write_trace_csv(const RunTrace& trace, std::optional<double> fstar,
                     const std::filesystem::path& path);

struct TraceRow {
  std::string run_id;
  std::string optimizer;
  std::string hyperparameters;
  long step = 0;
  double effective_passes = 0.0;
  double objective = 0.0;
  std::optional<double> objective_minus_fstar;
  double wall_seconds = 0.0;
};

/// Throws IoError for unreadable files or malformed rows.
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);

std::string format_number(double v);

// ---------------------------------------------------------------------------

struct GridOutcome {
  Method method = Method::sgd;
  std::vector<GridPoint> grid;
  std::vector<RunTrace> runs;
  GridSelection selection;
};

/// Runs every grid point of a baseline from x0 with the same seed and
/// selects the best by final objective.
GridOutcome grid_search(Method method, const ObjectiveProblem& problem, const Vector& x0,
                        std::vector<GridPoint> grid, const TraceOptions& options,
                        std::uint64_t seed, SampleOrder order = SampleOrder::uniform);

}  // namespace sfo
