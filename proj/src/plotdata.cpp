#include "sfo/plotdata.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "sfo/errors.hpp"

namespace sfo {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

std::vector<PlotRow> merge_traces(const std::filesystem::path& dir) {
  const auto summary_path = dir / "summary.json";
  std::ifstream in(summary_path);
  if (!in) throw IoError("cannot read " + summary_path.string());
  nlohmann::json summary;
  try {
    summary = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(summary_path.string() + ": " + e.what());
  }

  std::map<std::string, std::string> display;  // run id -> marking
  std::vector<std::string> duplicated;
  try {
    for (const auto& m : summary.at("methods")) {
      const auto best = m.at("best_run_id").get<std::string>();
      std::set<std::string> neighbors;
      for (const auto& n : m.at("neighbors")) neighbors.insert(n.get<std::string>());
      for (const auto& r : m.at("runs")) {
        const auto id = r.at("run_id").get<std::string>();
        const std::string mark = id == best ? "best" : neighbors.count(id) ? "neighbor" : "other";
        if (!display.emplace(id, mark).second) duplicated.push_back(id);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(summary_path.string() + ": unexpected layout: " + e.what());
  }
  if (!duplicated.empty()) throw MergeError("run ids listed more than once: " + join(duplicated));

  std::vector<std::filesystem::path> files;
  const auto traces = dir / "traces";
  if (std::filesystem::is_directory(traces))
    for (const auto& entry : std::filesystem::directory_iterator(traces))
      if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<PlotRow> out;
  std::set<std::string> seen;
  std::vector<std::string> unknown;
  std::vector<std::string> mismatched;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    seen.insert(id);
    const auto it = display.find(id);
    if (it == display.end()) {
      unknown.push_back(id);
      continue;
    }
    for (TraceRow& r : read_trace_csv(file)) {
      if (r.run_id != id) {
        mismatched.push_back(file.filename().string() + " contains " + r.run_id);
        break;
      }
      out.push_back({std::move(r), it->second});
    }
  }
  std::vector<std::string> missing;
  for (const auto& [id, mark] : display)
    if (!seen.count(id)) missing.push_back(id);

  std::vector<std::string> problems;
  if (!missing.empty()) problems.push_back("missing traces: " + join(missing));
  if (!unknown.empty()) problems.push_back("traces not in summary: " + join(unknown));
  if (!mismatched.empty()) problems.push_back("overlapping run ids: " + join(mismatched));
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw MergeError(msg);
  }
  return out;
}

void write_plot_data(const std::vector<PlotRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kPlotHeader << '\n';
  for (const PlotRow& p : rows) {
    const TraceRow& r = p.row;
    out << r.run_id << ',' << r.optimizer << ',' << r.hyperparameters << ',' << p.display << ','
        << r.step << ',' << format_number(r.effective_passes) << ',' << format_number(r.objective)
        << ',';
    if (r.objective_minus_fstar) out << format_number(*r.objective_minus_fstar);
    out << ',' << format_number(r.wall_seconds) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sfo
