#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sfo/types.hpp"

namespace sfo {

struct OverheadOptions {
  std::vector<Index> m_list;  // swept at fixed_n
  std::vector<Index> n_list;  // swept at fixed_m
  Index fixed_n = 20;
  Index fixed_m = 10000;
  int repeats = 5;
  /// Each repeat times whole passes until at least this many seconds elapse.
  double min_repeat_seconds = 0.05;
  int min_repeat_passes = 3;
  /// (max - min) / median across repeats above which a point is unreliable.
  double noise_threshold = 0.5;
  std::uint64_t seed = 0;
};

struct OverheadPoint {
  std::string sweep;  // "M" or "N"
  Index m = 0;
  Index n = 0;
  /// Median over repeats of optimizer-only seconds per effective pass.
  double seconds_per_pass = 0.0;
  /// Subtracted evaluation time per pass (median isolated evaluation times N).
  double eval_seconds_per_pass = 0.0;
  double spread = 0.0;
  bool reliable = true;
};

struct OverheadResult {
  std::vector<OverheadPoint> points;
  /// Empty when a sweep has fewer than two distinct sizes.
  std::optional<double> slope_m;
  std::optional<double> slope_n;
};

/// Least-squares slope of log(y) against log(x). Needs two distinct x values.
std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// SFO on SeparableLogCosh(M, N): warm up until every subfunction is active
/// plus one pass, then time passes.
OverheadPoint measure_overhead_point(Index m, Index n, const OverheadOptions& options);

OverheadResult measure_overhead(const OverheadOptions& options);

/// overhead.csv (one row per point) and overhead_fit.json.
void write_overhead(const OverheadResult& result, const std::filesystem::path& dir);

}  // namespace sfo
