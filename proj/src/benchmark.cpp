#include "sfo/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "sfo/errors.hpp"
#include "sfo/optimizer.hpp"

namespace sfo {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

Index get_positive(const json& j, const char* key, Index fallback, const std::string& where) {
  const auto v = get<long long>(j, key, fallback, where);
  if (v < 1) throw ConfigError(where + "." + key + " must be at least 1");
  return static_cast<Index>(v);
}

std::string kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::logistic: return "logistic";
    case ProblemKind::quadratic: return "quadratic";
    case ProblemKind::separable: return "separable";
  }
  return "unknown";
}

ProblemSpec parse_problem(const json& j) {
  check_keys(j,
             {"kind", "seed", "samples", "features", "l2", "label_noise", "feature_spread",
              "dimension", "condition", "subfunctions"},
             "problem");
  ProblemSpec p;
  const auto kind = get<std::string>(j, "kind", "logistic", "problem");
  if (kind == "logistic")
    p.kind = ProblemKind::logistic;
  else if (kind == "quadratic")
    p.kind = ProblemKind::quadratic;
  else if (kind == "separable")
    p.kind = ProblemKind::separable;
  else
    throw ConfigError("unknown problem kind '" + kind + "'");
  p.seed = get<std::uint64_t>(j, "seed", p.seed, "problem");
  p.samples = get_positive(j, "samples", p.samples, "problem");
  p.features = get_positive(j, "features", p.features, "problem");
  p.dimension = get_positive(j, "dimension", p.dimension, "problem");
  p.subfunctions = get_positive(j, "subfunctions", p.subfunctions, "problem");
  p.l2 = get<double>(j, "l2", p.l2, "problem");
  p.label_noise = get<double>(j, "label_noise", p.label_noise, "problem");
  p.feature_spread = get<double>(j, "feature_spread", p.feature_spread, "problem");
  p.condition = get<double>(j, "condition", p.condition, "problem");
  if (!(p.l2 >= 0.0)) throw ConfigError("problem.l2 must be non-negative");
  if (!(p.label_noise >= 0.0 && p.label_noise <= 0.5))
    throw ConfigError("problem.label_noise must lie in [0, 0.5]");
  if (!(p.feature_spread >= 1.0)) throw ConfigError("problem.feature_spread must be at least 1");
  if (!(p.condition >= 1.0)) throw ConfigError("problem.condition must be at least 1");
  if (p.kind == ProblemKind::logistic && p.subfunctions > p.samples)
    throw ConfigError("problem.subfunctions exceeds problem.samples");
  return p;
}

std::vector<double> positive_list(const json& j, const char* key, const std::string& where) {
  auto v = get<std::vector<double>>(j, key, {}, where);
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(where + "." + key + " entries must be positive");
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

OptimizerSpec parse_optimizer(const json& j, std::size_t index) {
  const std::string where = "optimizers[" + std::to_string(index) + "]";
  if (j.is_string()) return OptimizerSpec{parse_method(j.get<std::string>()), {}, {}, SampleOrder::uniform, 10};
  check_keys(j, {"name", "steps", "momenta", "order", "history"}, where);
  if (!j.contains("name")) throw ConfigError(where + " needs a name");
  OptimizerSpec o;
  o.method = parse_method(get<std::string>(j, "name", "", where));
  o.steps = positive_list(j, "steps", where);
  o.momenta = positive_list(j, "momenta", where);
  for (double m : o.momenta)
    if (m >= 1.0) throw ConfigError(where + ".momenta entries must be below 1");
  const auto order = get<std::string>(j, "order", "uniform", where);
  if (order == "uniform")
    o.order = SampleOrder::uniform;
  else if (order == "cyclic")
    o.order = SampleOrder::cyclic;
  else
    throw ConfigError(where + ".order must be uniform or cyclic");
  o.history = get_positive(j, "history", o.history, where);
  return o;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  check_keys(j,
             {"schema_version", "problem", "optimizers", "passes", "sample_every", "initial_scale",
              "output_dir", "seed"},
             "config");
  RunConfig c;
  c.schema_version = get<int>(j, "schema_version", -1, "config");
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("config.schema_version must be " + std::to_string(kConfigSchemaVersion));
  if (j.contains("problem")) c.problem = parse_problem(j.at("problem"));
  if (!j.contains("optimizers") || !j.at("optimizers").is_array() || j.at("optimizers").empty())
    throw ConfigError("config.optimizers must be a non-empty list");
  const json& list = j.at("optimizers");
  for (std::size_t i = 0; i < list.size(); ++i) c.optimizers.push_back(parse_optimizer(list[i], i));
  c.passes = get<double>(j, "passes", c.passes, "config");
  if (!(c.passes >= 0.0) || !std::isfinite(c.passes)) throw ConfigError("config.passes must be >= 0");
  c.sample_every = get<long>(j, "sample_every", c.sample_every, "config");
  if (c.sample_every < 0) throw ConfigError("config.sample_every must be >= 0");
  c.initial_scale = get<double>(j, "initial_scale", c.initial_scale, "config");
  if (!(c.initial_scale >= 0.0)) throw ConfigError("config.initial_scale must be >= 0");
  c.output_dir = get<std::string>(j, "output_dir", c.output_dir.string(), "config");
  c.seed = get<std::uint64_t>(j, "seed", c.seed, "config");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  const ProblemSpec& p = c.problem;
  json problem = {{"kind", kind_name(p.kind)}, {"seed", p.seed}, {"subfunctions", p.subfunctions}};
  if (p.kind == ProblemKind::logistic) {
    problem["samples"] = p.samples;
    problem["features"] = p.features;
    problem["l2"] = p.l2;
    problem["label_noise"] = p.label_noise;
    problem["feature_spread"] = p.feature_spread;
  } else {
    problem["dimension"] = p.dimension;
    if (p.kind == ProblemKind::quadratic) problem["condition"] = p.condition;
  }
  json optimizers = json::array();
  for (const OptimizerSpec& o : c.optimizers) {
    json e = {{"name", to_string(o.method)}};
    if (o.method != Method::sfo && o.method != Method::lbfgs) {
      std::vector<double> steps;
      std::vector<double> momenta;
      for (const GridPoint& g : grid_for(o)) {
        steps.push_back(g.step_size);
        if (g.momentum) momenta.push_back(*g.momentum);
      }
      std::sort(steps.begin(), steps.end());
      steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
      std::sort(momenta.begin(), momenta.end());
      momenta.erase(std::unique(momenta.begin(), momenta.end()), momenta.end());
      e["steps"] = steps;
      if (o.method == Method::momentum) e["momenta"] = momenta;
      e["order"] = o.order == SampleOrder::uniform ? "uniform" : "cyclic";
    }
    if (o.method == Method::lbfgs) e["history"] = o.history;
    optimizers.push_back(e);
  }
  return {{"schema_version", c.schema_version},
          {"problem", problem},
          {"optimizers", optimizers},
          {"passes", c.passes},
          {"sample_every", c.sample_every},
          {"initial_scale", c.initial_scale},
          {"output_dir", c.output_dir.string()},
          {"seed", c.seed}};
}

std::unique_ptr<ObjectiveProblem> build_problem(const ProblemSpec& p) {
  switch (p.kind) {
    case ProblemKind::logistic:
      return std::make_unique<LogisticRegression>(
          LogisticRegression(make_synthetic_dataset(p.seed, p.samples, p.features, p.subfunctions,
                                                    p.label_noise, p.feature_spread),
                             p.l2));
    case ProblemKind::quadratic:
      return std::make_unique<QuadraticEnsemble>(
          make_quadratic_ensemble(p.seed, p.dimension, p.subfunctions, p.condition));
    case ProblemKind::separable:
      return std::make_unique<SeparableLogCosh>(p.seed, p.dimension, p.subfunctions);
  }
  throw ConfigError("unknown problem kind");
}

Vector initial_position(const RunConfig& config, Index dimension) {
  Vector x = Vector::Zero(dimension);
  if (config.initial_scale > 0.0) {
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, config.initial_scale);
    for (Index k = 0; k < dimension; ++k) x(k) = normal(rng);
  }
  return x;
}

std::vector<GridPoint> grid_for(const OptimizerSpec& spec) {
  if (spec.method == Method::sfo || spec.method == Method::lbfgs) return {GridPoint{}};
  const std::vector<double> steps = spec.steps.empty() ? default_step_grid() : spec.steps;
  std::vector<GridPoint> grid;
  if (spec.method == Method::momentum) {
    const std::vector<double> momenta =
        spec.momenta.empty() ? default_momentum_grid() : spec.momenta;
    for (double mu : momenta)
      for (double s : steps) grid.push_back({s, mu});
  } else {
    for (double s : steps) grid.push_back({s, std::nullopt});
  }
  return grid;
}

BenchmarkResult run_benchmark(const RunConfig& config) {
  const auto problem = build_problem(config.problem);
  const Vector x0 = initial_position(config, problem->dimension());
  TraceOptions options;
  options.passes = config.passes;
  options.sample_every = config.sample_every;

  BenchmarkResult result;
  result.problem = problem->description();
  std::set<std::string> used_ids;
  for (const OptimizerSpec& spec : config.optimizers) {
    MethodResult m;
    m.method = spec.method;
    m.grid = grid_for(spec);
    if (spec.method == Method::sfo) {
      SfoConfig sc;
      sc.seed = config.seed;
      if (config.initial_scale > 0.0) sc.initial_position = x0;
      RunTrace t = run_optimizer(
          *problem,
          [&](const ObjectiveProblem& p) { return std::make_unique<SfoStepper>(p, sc); }, options);
      m.runs.push_back(std::move(t));
    } else if (spec.method == Method::lbfgs) {
      BaselineConfig bc;
      bc.method = Method::lbfgs;
      bc.history_length = spec.history;
      m.runs.push_back(run_optimizer(
          *problem, [&](const ObjectiveProblem& p) { return make_baseline(p, x0, bc); }, options));
    } else {
      GridOutcome g = grid_search(spec.method, *problem, x0, m.grid, options, config.seed, spec.order);
      m.runs = std::move(g.runs);
    }
    // Run ids stay unique when a method is listed more than once.
    const std::string base = to_string(spec.method);
    int suffix = 0;
    while (used_ids.count(base + (suffix ? "." + std::to_string(suffix) : "") + "-0")) ++suffix;
    for (std::size_t i = 0; i < m.runs.size(); ++i) {
      m.runs[i].run_id = base + (suffix ? "." + std::to_string(suffix) : "") + "-" + std::to_string(i);
      used_ids.insert(m.runs[i].run_id);
    }
    std::vector<double> finals;
    for (const RunTrace& t : m.runs) finals.push_back(t.final_objective());
    m.selection = select_best(m.grid, finals);
    if (m.selection.best_at_endpoint)
      result.warnings.push_back(base + ": best hyperparameters " +
                                format_hyperparameters(m.grid[static_cast<std::size_t>(m.selection.best)]) +
                                " lie at the edge of the grid");
    for (const RunTrace& t : m.runs)
      if (t.status != "ok" && t.status != "converged")
        result.warnings.push_back(t.run_id + " (" + t.hyperparameters + "): " + t.status);
    result.methods.push_back(std::move(m));
  }

  if (const auto opt = problem->optimum()) {
    result.fstar = opt->value;
    result.fstar_source = config.problem.kind == ProblemKind::quadratic ? "analytic" : "derived";
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : result.methods)
      for (const auto& t : m.runs)
        for (const auto& p : t.points)
          if (std::isfinite(p.objective)) best = std::min(best, p.objective);
    if (std::isfinite(best)) {
      result.fstar = best;
      result.fstar_source = "best_observed";
    }
  }
  return result;
}

void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "traces", ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) throw IoError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

json summary_json(const BenchmarkResult& r) {
  json methods = json::array();
  json sfo_runs = json::array();
  for (const MethodResult& m : r.methods) {
    json runs = json::array();
    for (const RunTrace& t : m.runs) {
      json e = {{"run_id", t.run_id},
                {"hyperparams", t.hyperparameters},
                {"status", t.status},
                {"evaluations", t.evaluations},
                {"steps", t.steps},
                {"samples", t.points.size()}};
      const double f = t.final_objective();
      e["final_objective"] = std::isfinite(f) ? json(f) : json(nullptr);
      if (r.fstar && std::isfinite(f)) e["final_minus_fstar"] = f - *r.fstar;
      runs.push_back(e);
      if (t.bad_updates) {
        sfo_runs.push_back({{"run_id", t.run_id},
                            {"bad_updates", *t.bad_updates},
                            {"steps", t.steps},
                            {"active_trace", t.active_trace}});
      }
    }
    const auto best = static_cast<std::size_t>(m.selection.best);
    json neighbors = json::array();
    for (Index n : m.selection.neighbors) neighbors.push_back(m.runs[static_cast<std::size_t>(n)].run_id);
    methods.push_back({{"optimizer", to_string(m.method)},
                       {"best_run_id", m.runs[best].run_id},
                       {"best_hyperparams", m.runs[best].hyperparameters},
                       {"neighbors", neighbors},
                       {"best_at_endpoint", m.selection.best_at_endpoint},
                       {"runs", runs}});
  }
  return {{"schema_version", kConfigSchemaVersion},
          {"problem", r.problem},
          {"fstar", r.fstar ? json(*r.fstar) : json(nullptr)},
          {"fstar_source", r.fstar_source},
          {"methods", methods},
          {"sfo", sfo_runs},
          {"warnings", r.warnings}};
}

void write_benchmark(const BenchmarkResult& result, const RunConfig& config,
                     const std::filesystem::path& dir) {
  prepare_output_dir(dir);
  for (const MethodResult& m : result.methods)
    for (const RunTrace& t : m.runs) write_trace_csv(t, result.fstar, dir / "traces" / (t.run_id + ".csv"));

  auto write_json = [&](const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out || !(out << j.dump(2) << '\n')) throw IoError("cannot write " + path.string());
  };
  write_json(dir / "summary.json", summary_json(result));
  write_json(dir / "config.json", to_json(config));
}

}  // namespace sfo
