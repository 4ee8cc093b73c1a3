#pragma once

#include <vector>

#include "storm/core/types.hpp"

namespace storm::policy {

// Probe state where the two expert modes disagree: the object lies straight
// to the right of the gripper, so the left-curling mode moves up and the
// right-curling mode moves down on the first sub-action.
inline Observation bimodality_probe() {
  Observation o;
  o.gripper = {0.2, 0.5};
  o.holding = 0;
  o.objects = {{0.7, 0.5}, {0.5, 0.85}};
  o.target = {0.5, 0.2};
  o.task_id = 0;
  return o;
}

inline constexpr double kModeThreshold = 0.025;

struct ModeSplit {
  int up = 0;
  int down = 0;
  int neither = 0;
  int total = 0;

  double up_fraction() const { return total ? static_cast<double>(up) / total : 0.0; }
  double down_fraction() const { return total ? static_cast<double>(down) / total : 0.0; }
  bool both_modes(double min_fraction) const {
    return up_fraction() >= min_fraction && down_fraction() >= min_fraction;
  }
};

inline ModeSplit classify_modes(const std::vector<ActionChunk>& chunks) {
  ModeSplit s;
  for (const auto& c : chunks) {
    const double dy = c[0].dy;
    if (dy > kModeThreshold) {
      ++s.up;
    } else if (dy < -kModeThreshold) {
      ++s.down;
    } else {
      ++s.neither;
    }
    ++s.total;
  }
  return s;
}

}  // namespace storm::policy
