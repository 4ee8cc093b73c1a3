#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"
#include "storm/core/types.hpp"

namespace storm {

struct TrajectoryStep {
  Observation obs;
  ActionChunk action;
  double reward = 0.0;
  bool done = false;
  bool success = false;

  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

// One episode. `done` is set only on the final step and success implies done.
struct Trajectory {
  std::uint64_t seed = 0;
  int task_id = 0;
  int variation_id = 0;
  std::vector<TrajectoryStep> steps;

  bool succeeded() const { return !steps.empty() && steps.back().success; }
  double total_reward() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.reward;
    return r;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// JSON-lines layout: a header line
//   {"seed":S,"task_id":T,"variation_id":V,"n_steps":N}
// followed by N step lines
//   {"obs":[...],"action":[...],"reward":r,"done":b,"success":b}
// where obs is Observation::flatten() and action is ActionChunk::flatten().
// Several trajectories may be concatenated in one file.
inline void write_trajectory_jsonl(std::ostream& out, const Trajectory& t) {
  nlohmann::json header = {{"seed", t.seed},
                           {"task_id", t.task_id},
                           {"variation_id", t.variation_id},
                           {"n_steps", t.steps.size()}};
  out << header.dump() << "\n";
  for (const auto& s : t.steps) {
    nlohmann::json line = {{"obs", s.obs.flatten()},
                           {"action", s.action.flatten()},
                           {"reward", s.reward},
                           {"done", s.done},
                           {"success", s.success}};
    out << line.dump() << "\n";
  }
}

inline std::vector<Trajectory> read_trajectories_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  int line_no = 0;
  auto next_line = [&](std::string& l) {
    while (std::getline(in, l)) {
      ++line_no;
      if (l.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  try {
    while (next_line(line)) {
      const auto h = nlohmann::json::parse(line);
      Trajectory t;
      t.seed = h.at("seed").get<std::uint64_t>();
      t.task_id = h.at("task_id").get<int>();
      t.variation_id = h.at("variation_id").get<int>();
      const auto n = h.at("n_steps").get<std::size_t>();
      for (std::size_t i = 0; i < n; ++i) {
        if (!next_line(line)) throw IoError("truncated trajectory file");
        const auto s = nlohmann::json::parse(line);
        TrajectoryStep step;
        step.obs = Observation::from_flat(s.at("obs").get<std::vector<double>>());
        step.action = ActionChunk::from_flat(s.at("action").get<std::vector<double>>());
        step.reward = s.at("reward").get<double>();
        step.done = s.at("done").get<bool>();
        step.success = s.at("success").get<bool>();
        t.steps.push_back(std::move(step));
      }
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("trajectory file line " + std::to_string(line_no) + ": " + e.what());
  }
  return out;
}

}  // namespace storm
