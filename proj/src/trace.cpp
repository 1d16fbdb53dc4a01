#include "sfo/trace.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "sfo/errors.hpp"

namespace sfo {

double RunTrace::final_objective() const {
  if (points.empty() || status == "diverged" || status.rfind("error", 0) == 0)
    return std::numeric_limits<double>::infinity();
  const double v = points.back().objective;
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

namespace {

double objective_or_nan(const ObjectiveProblem& problem, const Vector& x) {
  try {
    return full_objective(problem, x).value;
  } catch (const std::domain_error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

RunTrace run_optimizer(const ObjectiveProblem& problem, const OptimizerFactory& make,
                       const TraceOptions& options) {
  CountingProblem counted(problem);
  RunTrace trace;
  const Index n = problem.subfunction_count();
  const auto budget = options.passes > 0.0
                          ? static_cast<std::uint64_t>(std::llround(options.passes * static_cast<double>(n)))
                          : std::uint64_t{0};

  std::unique_ptr<SteppingOptimizer> opt;
  try {
    opt = make(counted);
  } catch (const std::exception& e) {
    trace.status = std::string("error: ") + e.what();
    return trace;
  }
  trace.optimizer = opt->name();
  trace.hyperparameters = opt->hyperparameters();
  if (budget == 0) {
    trace.status = "empty";
    return trace;
  }

  double wall = 0.0;
  auto sample = [&] {
    const double f = objective_or_nan(problem, opt->position());
    trace.points.push_back({trace.steps,
                            static_cast<double>(counted.evaluations()) / static_cast<double>(n), f,
                            wall});
    return f;
  };

  sample();
  std::uint64_t next_mark = static_cast<std::uint64_t>(n);
  while (counted.evaluations() < budget && !opt->finished()) {
    const auto start = std::chrono::steady_clock::now();
    try {
      opt->step();
    } catch (const std::exception& e) {
      trace.status = std::string("error: ") + e.what();
      break;
    }
    wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++trace.steps;

    const bool due = options.sample_every > 0 ? trace.steps % options.sample_every == 0
                                              : counted.evaluations() >= next_mark;
    if (due) {
      while (next_mark <= counted.evaluations()) next_mark += static_cast<std::uint64_t>(n);
      if (!std::isfinite(sample())) {
        trace.status = "diverged";
        break;
      }
    }
  }
  if (trace.points.back().step != trace.steps) {
    if (!std::isfinite(sample()) && trace.status == "ok") trace.status = "diverged";
  }
  if (trace.status == "ok" && opt->finished()) trace.status = opt->status();
  trace.evaluations = counted.evaluations();

  if (const auto* s = dynamic_cast<const SfoStepper*>(opt.get())) {
    trace.bad_updates = s->optimizer().bad_update_count();
    trace.active_trace = s->optimizer().active_trace();
  }
  return trace;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(const RunTrace& trace, std::optional<double> fstar,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kTraceHeader << '\n';
  for (const TracePoint& p : trace.points) {
    out << trace.run_id << ',' << trace.optimizer << ',' << trace.hyperparameters << ',' << p.step
        << ',' << format_number(p.effective_passes) << ',' << format_number(p.objective) << ',';
    if (fstar) out << format_number(p.objective - *fstar);
    out << ',' << format_number(p.wall_seconds) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

double parse_double(const std::string& field, const std::filesystem::path& path, long line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    // stod rejects "nan"/"inf" spellings produced by printf on some platforms.
    if (field == "nan" || field == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (field == "inf") return std::numeric_limits<double>::infinity();
    if (field == "-inf") return -std::numeric_limits<double>::infinity();
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" + field + "'");
  }
}

}  // namespace

std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw IoError(path.string() + ": missing or unexpected header");

  std::vector<TraceRow> rows;
  long number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 8)
      throw IoError(path.string() + ":" + std::to_string(number) + ": expected 8 columns");
    TraceRow r;
    r.run_id = f[0];
    r.optimizer = f[1];
    r.hyperparameters = f[2];
    r.step = static_cast<long>(parse_double(f[3], path, number));
    r.effective_passes = parse_double(f[4], path, number);
    r.objective = parse_double(f[5], path, number);
    if (!f[6].empty()) r.objective_minus_fstar = parse_double(f[6], path, number);
    r.wall_seconds = parse_double(f[7], path, number);
    rows.push_back(std::move(r));
  }
  return rows;
}

GridOutcome grid_search(Method method, const ObjectiveProblem& problem, const Vector& x0,
                        std::vector<GridPoint> grid, const TraceOptions& options,
                        std::uint64_t seed, SampleOrder order) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid for " + to_string(method));
  GridOutcome out;
  out.method = method;
  out.grid = std::move(grid);
  std::vector<double> finals;
  for (std::size_t i = 0; i < out.grid.size(); ++i) {
    BaselineConfig config;
    config.method = method;
    config.point = out.grid[i];
    config.order = order;
    config.seed = seed;
    RunTrace t = run_optimizer(
        problem, [&](const ObjectiveProblem& p) { return make_baseline(p, x0, config); }, options);
    t.run_id = to_string(method) + "-" + std::to_string(i);
    finals.push_back(t.final_objective());
    out.runs.push_back(std::move(t));
  }
  out.selection = select_best(out.grid, finals);
  return out;
}

}  // namespace sfo
