#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfo/trace.hpp"

namespace sfo {

struct PlotRow {
  TraceRow row;
  /// "best", "neighbor" or "other", per method.
  std::string display;
};

/// Merges <dir>/traces/*.csv into one long-form table using
/// <dir>/summary.json to mark each method's best run and its grid
/// neighbors. Throws MergeError when run ids are missing, duplicated, or
/// disagree with their file names.
std::vector<PlotRow> merge_traces(const std::filesystem::path& dir);

inline constexpr const char* kPlotHeader =
    "run_id,optimizer,hyperparams,display,step,effective_passes,objective,objective_minus_fstar,"
    "wall_seconds";

void write_plot_data(const std::vector<PlotRow>& rows, const std::filesystem::path& path);

}  // namespace sfo
