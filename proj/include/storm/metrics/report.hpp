#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"
#include "storm/core/trajectory.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/metrics/metrics.hpp"

namespace storm::metrics {

// One evaluation cell: an arm on one task (optionally with flaky grasps).
struct EvalRow {
  std::string arm;
  std::string task;
  int flaky = 0;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double stderr_ = 0.0;
  double mean_return = 0.0;
  double mean_length = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

inline EvalRow make_row(const std::string& arm, int task, int flaky, std::span<const Trajectory> trajs) {
  const SuccessRate s = success_rate(trajs);
  EvalRow r{arm, std::string(env::task_name(static_cast<env::TaskKind>(task))), flaky, s.count, s.successes, s.rate,
            s.stderr_, 0.0, 0.0};
  for (const auto& t : trajs) {
    r.mean_return += t.total_reward();
    r.mean_length += static_cast<double>(t.steps.size());
  }
  r.mean_return /= s.count;
  r.mean_length /= s.count;
  return r;
}

inline const char* kEvalCsvHeader = "arm,task,flaky,episodes,successes,success_rate,stderr,mean_return,mean_length";

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << kEvalCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.arm << "," << r.task << "," << r.flaky << "," << r.episodes << "," << r.successes << ","
        << num(r.success_rate) << "," << num(r.stderr_) << "," << num(r.mean_return) << "," << num(r.mean_length)
        << "\n";
  }
  return out.str();
}

inline std::vector<EvalRow> parse_eval_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kEvalCsvHeader) throw ValidationError("eval report has an unexpected header");
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw ValidationError("eval report row has " + std::to_string(f.size()) + " fields");
    rows.push_back({f[0], f[1], std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), std::stod(f[5]), std::stod(f[6]),
                    std::stod(f[7]), std::stod(f[8])});
  }
  return rows;
}

inline nlohmann::json rows_to_json(const std::vector<EvalRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"arm", r.arm},
                 {"task", r.task},
                 {"flaky", r.flaky},
                 {"episodes", r.episodes},
                 {"successes", r.successes},
                 {"success_rate", r.success_rate},
                 {"stderr", r.stderr_},
                 {"mean_return", r.mean_return},
                 {"mean_length", r.mean_length}});
  }
  return j;
}

// Methods x tasks table of success rates (percent) with an average column.
// A method is the arm name, suffixed with "+flaky<n>" for flaky runs.
struct SummaryTable {
  std::vector<std::string> tasks;
  std::vector<std::string> methods;
  std::map<std::string, std::map<std::string, double>> cells;

  double average(const std::string& method) const {
    const auto& row = cells.at(method);
    double s = 0.0;
    for (const auto& [task, v] : row) s += v;
    return s / static_cast<double>(row.size());
  }
};

inline SummaryTable summary_table(const std::vector<EvalRow>& rows) {
  SummaryTable t;
  for (const auto& r : rows) {
    const std::string method = r.flaky > 0 ? r.arm + "+flaky" + std::to_string(r.flaky) : r.arm;
    if (t.cells[method].count(r.task)) throw ValidationError("duplicate cell " + method + "/" + r.task);
    t.cells[method][r.task] = 100.0 * r.success_rate;
    if (std::find(t.methods.begin(), t.methods.end(), method) == t.methods.end()) t.methods.push_back(method);
    if (std::find(t.tasks.begin(), t.tasks.end(), r.task) == t.tasks.end()) t.tasks.push_back(r.task);
  }
  return t;
}

inline std::string summary_csv(const SummaryTable& t) {
  std::ostringstream out;
  out << "method";
  for (const auto& task : t.tasks) out << "," << task;
  out << ",average\n";
  for (const auto& m : t.methods) {
    out << m;
    for (const auto& task : t.tasks) {
      const auto& row = t.cells.at(m);
      const auto it = row.find(task);
      out << "," << (it == row.end() ? std::string() : num(it->second));
    }
    out << "," << num(t.average(m)) << "\n";
  }
  return out.str();
}

}  // namespace storm::metrics
