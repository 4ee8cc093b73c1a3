#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"
#include "storm/core/types.hpp"

namespace storm::policy {

// Expert (observation, chunk) pair; mode is 0 for left, 1 for right.
struct Demonstration {
  Observation obs;
  ActionChunk chunk;
  int mode = 0;

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

// One JSON object per line: {"obs":[...],"chunk":[...],"mode":m}.
inline void write_demos_jsonl(std::ostream& out, const std::vector<Demonstration>& demos) {
  for (const auto& d : demos) {
    nlohmann::json j = {{"obs", d.obs.flatten()}, {"chunk", d.chunk.flatten()}, {"mode", d.mode}};
    out << j.dump() << "\n";
  }
}

inline std::vector<Demonstration> read_demos_jsonl(std::istream& in) {
  std::vector<Demonstration> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Demonstration d;
      d.obs = Observation::from_flat(j.at("obs").get<std::vector<double>>());
      d.chunk = ActionChunk::from_flat(j.at("chunk").get<std::vector<double>>());
      d.mode = j.at("mode").get<int>();
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("demo file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace storm::policy
