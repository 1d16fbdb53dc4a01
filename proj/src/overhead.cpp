#include "sfo/overhead.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sfo/errors.hpp"
#include "sfo/hessian.hpp"
#include "sfo/optimizer.hpp"
#include "sfo/problem.hpp"
#include "sfo/trace.hpp"

namespace sfo {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("fit_loglog_slope: x and y differ in length");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  return sxy / sxx;
}

OverheadPoint measure_overhead_point(Index m, Index n, const OverheadOptions& options) {
  if (options.repeats < 1) throw ConfigError("overhead repeats must be at least 1");
  const SeparableLogCosh problem(options.seed, m, n);
  SfoConfig config;
  config.seed = options.seed;
  Sfo sfo(problem, config);

  while (sfo.active_count() < n) sfo.step();
  const auto warm = Clock::now();
  for (Index s = 0; s < n; ++s) sfo.step();
  const double pass_estimate = std::max(seconds_since(warm), 1e-9);
  const auto passes = static_cast<long>(
      std::max(static_cast<double>(options.min_repeat_passes),
               std::ceil(options.min_repeat_seconds / pass_estimate)));

  Vector gradient(m);
  std::vector<double> overheads;
  std::vector<double> eval_costs;
  for (int r = 0; r < options.repeats; ++r) {
    const auto start = Clock::now();
    for (long p = 0; p < passes; ++p)
      for (Index s = 0; s < n; ++s) sfo.step();
    const double total = seconds_since(start) / static_cast<double>(passes);

    const Vector x = sfo.position();
    std::vector<double> single(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const auto t0 = Clock::now();
      problem.evaluate(i, x, gradient);
      single[static_cast<std::size_t>(i)] = seconds_since(t0);
    }
    const double eval_pass = median(single) * static_cast<double>(n);
    eval_costs.push_back(eval_pass);
    overheads.push_back(std::max(total - eval_pass, 0.0));
  }

  OverheadPoint out;
  out.m = m;
  out.n = n;
  out.seconds_per_pass = median(overheads);
  out.eval_seconds_per_pass = median(eval_costs);
  const auto [lo, hi] = std::minmax_element(overheads.begin(), overheads.end());
  out.spread = out.seconds_per_pass > 0.0 ? (*hi - *lo) / out.seconds_per_pass
                                          : std::numeric_limits<double>::infinity();
  out.reliable = out.spread <= options.noise_threshold;
  return out;
}

OverheadResult measure_overhead(const OverheadOptions& options) {
  OverheadResult result;
  std::vector<double> xs, ys;
  for (Index m : options.m_list) {
    OverheadPoint p = measure_overhead_point(m, options.fixed_n, options);
    p.sweep = "M";
    xs.push_back(static_cast<double>(m));
    ys.push_back(p.seconds_per_pass);
    result.points.push_back(p);
  }
  result.slope_m = fit_loglog_slope(xs, ys);
  xs.clear();
  ys.clear();
  for (Index n : options.n_list) {
    OverheadPoint p = measure_overhead_point(options.fixed_m, n, options);
    p.sweep = "N";
    xs.push_back(static_cast<double>(n));
    ys.push_back(p.seconds_per_pass);
    result.points.push_back(p);
  }
  result.slope_n = fit_loglog_slope(xs, ys);
  return result;
}

void write_overhead(const OverheadResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "overhead.csv");
    if (!out) throw IoError("cannot write " + (dir / "overhead.csv").string());
    out << "sweep,M,N,seconds_per_pass,eval_seconds_per_pass,spread,reliable\n";
    for (const OverheadPoint& p : result.points)
      out << p.sweep << ',' << p.m << ',' << p.n << ',' << format_number(p.seconds_per_pass) << ','
          << format_number(p.eval_seconds_per_pass) << ',' << format_number(p.spread) << ','
          << (p.reliable ? "true" : "false") << '\n';
  }
  auto slope = [](const std::optional<double>& s) {
    return s ? nlohmann::json(*s) : nlohmann::json("n/a");
  };
  std::ofstream out(dir / "overhead_fit.json");
  out << nlohmann::json{{"slope_m", slope(result.slope_m)}, {"slope_n", slope(result.slope_n)}}.dump(2)
      << '\n';
  if (!out) throw IoError("cannot write " + (dir / "overhead_fit.json").string());
}

}  // namespace sfo
