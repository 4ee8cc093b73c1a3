#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"
#include "storm/core/types.hpp"

namespace storm::worldmodel {

// One environment transition at chunk granularity. `reward` is the summed
// sub-step reward of the chunk.
struct Transition {
  Observation obs;
  ActionChunk action;
  Observation next_obs;
  double reward = 0.0;
  int episode = 0;
  bool exploratory = false;
};

inline nlohmann::json transition_to_json(const Transition& t) {
  return {{"obs", t.obs.flatten()},
          {"action", t.action.flatten()},
          {"next_obs", t.next_obs.flatten()},
          {"reward", t.reward},
          {"episode", t.episode},
          {"exploratory", t.exploratory}};
}

inline Transition transition_from_json(const nlohmann::json& j) {
  Transition t;
  t.obs = Observation::from_flat(j.at("obs").get<std::vector<double>>());
  t.action = ActionChunk::from_flat(j.at("action").get<std::vector<double>>());
  t.next_obs = Observation::from_flat(j.at("next_obs").get<std::vector<double>>());
  t.reward = j.at("reward").get<double>();
  t.episode = j.value("episode", 0);
  t.exploratory = j.value("exploratory", false);
  return t;
}

inline void write_transitions_jsonl(std::ostream& out, const std::vector<Transition>& ts) {
  for (const auto& t : ts) out << transition_to_json(t).dump() << "\n";
}

inline std::vector<Transition> read_transitions_jsonl(std::istream& in) {
  std::vector<Transition> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(transition_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw IoError("transitions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace storm::worldmodel
