#pragma once

#include <algorithm>

#include "storm/core/types.hpp"
#include "storm/env/tabletop.hpp"

namespace storm::env {

// Approach side. The approach field rotates the line of sight toward the
// object counter-clockwise (left) or clockwise (right), so the two modes sweep
// around opposite sides of the object.
enum class ExpertMode { kLeft, kRight };

inline constexpr double kApproachGain = 0.5;
inline constexpr double kSwirlGain = 0.3;
inline constexpr double kGraspSnapDistance = 0.02;
inline constexpr double kReleaseTolerance = 0.01;

// One closed-loop decision of the scripted controller.
inline ActionStep expert_substep(const WorldState& s, ExpertMode mode) {
  if (s.success) return {0.0, 0.0, 1.0};
  const Vec2 obj = s.objects[0];
  if (s.holding == 0) {
    const Vec2 to_target = s.target - s.gripper;
    if (to_target.norm() <= kReleaseTolerance) return {0.0, 0.0, 1.0};
    return clamp_action({to_target.x, to_target.y, -1.0});
  }
  if (s.holding > 0) return {0.0, 0.0, 1.0};
  const Vec2 d = obj - s.gripper;
  if (d.norm() <= kGraspSnapDistance) return clamp_action({d.x, d.y, -1.0});
  const double side = mode == ExpertMode::kLeft ? 1.0 : -1.0;
  return clamp_action({kApproachGain * d.x - side * kSwirlGain * d.y, kApproachGain * d.y + side * kSwirlGain * d.x, 1.0});
}

// Chunk of H sub-actions, each planned on the simulator state the previous
// ones lead to.
inline ActionChunk scripted_expert(const WorldState& state, ExpertMode mode, int horizon) {
  WorldState sim = state;
  std::vector<ActionStep> steps;
  steps.reserve(static_cast<std::size_t>(horizon));
  for (int i = 0; i < horizon; ++i) {
    const ActionStep a = expert_substep(sim, mode);
    steps.push_back(a);
    apply_substep(sim, a);
  }
  return ActionChunk(std::move(steps));
}

}  // namespace storm::env
