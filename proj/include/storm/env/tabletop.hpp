#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"
#include "storm/core/types.hpp"

namespace storm::env {

inline constexpr double kObjectRadius = 0.03;
inline constexpr double kTargetRadius = 0.06;
inline constexpr double kZoneRadius = 0.12;
inline constexpr double kGraspRadius = 0.05;
inline constexpr double kSlipNudge = 0.02;
inline constexpr double kSuccessBonus = 10.0;
inline constexpr double kBorderMargin = 0.1;
inline constexpr double kMinSeparation = 0.15;
inline constexpr int kPlacementAttempts = 1000;

enum class TaskKind { kPutOnTarget = 0, kStack = 1, kPutInZone = 2 };
inline constexpr int kNumTasks = 3;

inline std::string_view task_name(TaskKind t) {
  switch (t) {
    case TaskKind::kPutOnTarget: return "put_on_target";
    case TaskKind::kStack: return "stack";
    case TaskKind::kPutInZone: return "put_in_zone";
  }
  return "unknown";
}

inline TaskKind task_from_name(std::string_view name) {
  for (int i = 0; i < kNumTasks; ++i) {
    if (task_name(static_cast<TaskKind>(i)) == name) return static_cast<TaskKind>(i);
  }
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

struct TaskSpec {
  TaskKind task = TaskKind::kPutOnTarget;
  int n_objects = 2;
  int variation_id = 0;
  int flaky_grasps = 0;
  int max_steps = 30;
  double shaping_gamma = 0.9;

  int task_id() const { return static_cast<int>(task); }
  double target_radius() const { return task == TaskKind::kPutInZone ? kZoneRadius : kTargetRadius; }
};

// Ground-truth simulator state. Object 0 is the one the task is about; for
// the stack task the target tracks object 1.
struct WorldState {
  Vec2 gripper;
  int holding = -1;
  std::vector<Vec2> objects;
  Vec2 target;
  double target_radius = kTargetRadius;
  int grasp_fail_counter = 0;
  int step_count = 0;
  int task_id = 0;
  int max_steps = 30;
  double shaping_gamma = 0.9;
  bool success = false;

  TaskKind task() const { return static_cast<TaskKind>(task_id); }
  bool done() const { return success || step_count >= max_steps; }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline bool task_satisfied(const WorldState& s) {
  if (s.holding == 0 || (s.task() == TaskKind::kStack && s.holding == 1)) return false;
  return distance(s.objects[0], s.target) <= s.target_radius;
}

// Shaping potential: -|gripper - obj0| (unless obj0 is held) - |obj0 - target|.
inline double potential(const WorldState& s) {
  const double reach = s.holding == 0 ? 0.0 : distance(s.gripper, s.objects[0]);
  return -reach - distance(s.objects[0], s.target);
}

// Initial placement from rng_stream(init_seed, "env-init"). reset(spec) uses
// the variation id as the seed; data generation draws from a disjoint range.
inline WorldState reset(const TaskSpec& spec, std::uint64_t init_seed) {
  if (spec.n_objects < 2) throw SpecError("tasks need at least two objects");
  if (spec.flaky_grasps < 0 || spec.max_steps < 1) throw SpecError("invalid task spec");
  Rng rng = rng_stream(init_seed, "env-init");
  std::vector<Vec2> placed;
  auto place = [&]() {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const Vec2 p{rng.uniform(kBorderMargin, 1.0 - kBorderMargin), rng.uniform(kBorderMargin, 1.0 - kBorderMargin)};
      bool ok = true;
      for (const auto& q : placed) ok = ok && distance(p, q) >= kMinSeparation;
      if (ok) {
        placed.push_back(p);
        return p;
      }
    }
    throw SpecError("object placement failed after " + std::to_string(kPlacementAttempts) + " samples");
  };
  WorldState s;
  s.gripper = place();
  for (int i = 0; i < spec.n_objects; ++i) s.objects.push_back(place());
  s.target = spec.task == TaskKind::kStack ? s.objects[1] : place();
  s.target_radius = spec.target_radius();
  s.grasp_fail_counter = spec.flaky_grasps;
  s.task_id = spec.task_id();
  s.max_steps = spec.max_steps;
  s.shaping_gamma = spec.shaping_gamma;
  return s;
}

inline WorldState reset(const TaskSpec& spec) {
  if (spec.variation_id < 0 || spec.variation_id >= 24) throw SpecError("variation_id must lie in [0, 24)");
  return reset(spec, static_cast<std::uint64_t>(spec.variation_id));
}

// Applies one sub-action in place and returns its reward. No-op once the
// task has been solved.
inline double apply_substep(WorldState& s, ActionStep a) {
  if (s.success) return 0.0;
  a = clamp_action(a);
  const double phi_before = potential(s);
  s.gripper = clamp_unit(s.gripper + Vec2{a.dx, a.dy});
  if (s.holding >= 0) s.objects[s.holding] = s.gripper;
  if (a.g < 0.0) {
    if (s.holding < 0) {
      int nearest = -1;
      double best = kGraspRadius;
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        const double d = distance(s.gripper, s.objects[i]);
        if (d <= best && (nearest < 0 || d < best)) {
          best = d;
          nearest = static_cast<int>(i);
        }
      }
      if (nearest >= 0) {
        if (s.grasp_fail_counter > 0) {
          --s.grasp_fail_counter;
          Vec2 dir = s.objects[nearest] - s.gripper;
          const double n = dir.norm();
          dir = n > 1e-12 ? (1.0 / n) * dir : Vec2{1.0, 0.0};
          s.objects[nearest] = clamp_unit(s.objects[nearest] + kSlipNudge * dir);
        } else {
          s.holding = nearest;
          s.objects[nearest] = s.gripper;
        }
      }
    }
  } else {
    s.holding = -1;
  }
  if (s.task() == TaskKind::kStack) s.target = s.objects[1];
  s.success = task_satisfied(s);
  return s.shaping_gamma * potential(s) - phi_before + (s.success ? kSuccessBonus : 0.0);
}

struct StepResult {
  WorldState state;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  std::vector<double> substep_rewards;
};

// Executes a chunk. The chunk reward is the sum of sub-action rewards;
// sub-actions after the task is solved are skipped.
inline StepResult step(const WorldState& state, const ActionChunk& action) {
  if (state.done()) throw UsageError("step() called on a finished episode");
  StepResult r;
  r.state = state;
  for (const auto& a : action.steps()) {
    if (r.state.success) break;
    const double rew = apply_substep(r.state, a);
    r.substep_rewards.push_back(rew);
    r.reward += rew;
  }
  ++r.state.step_count;
  r.success = r.state.success;
  r.done = r.state.done();
  return r;
}

inline Observation observe(const WorldState& s) {
  Observation o;
  o.gripper = s.gripper;
  o.holding = s.holding >= 0 ? 1 : 0;
  o.objects = s.objects;
  o.target = s.target;
  o.task_id = s.task_id;
  return o;
}

// Reconstructs a simulator state from an observation. Hidden fields (grasp
// failure counter, step count) take their fresh-episode values.
inline WorldState state_from_observation(const Observation& obs, const TaskSpec& spec) {
  WorldState s;
  s.gripper = clamp_unit(obs.gripper);
  for (const auto& o : obs.objects) s.objects.push_back(clamp_unit(o));
  s.target = clamp_unit(obs.target);
  s.task_id = obs.task_id;
  s.target_radius = static_cast<TaskKind>(obs.task_id) == TaskKind::kPutInZone ? kZoneRadius : kTargetRadius;
  s.max_steps = spec.max_steps;
  s.shaping_gamma = spec.shaping_gamma;
  if (obs.holding && !s.objects.empty()) {
    int best = 0;
    for (std::size_t i = 1; i < s.objects.size(); ++i) {
      if (distance(s.objects[i], s.gripper) < distance(s.objects[best], s.gripper)) best = static_cast<int>(i);
    }
    s.holding = best;
    s.objects[best] = s.gripper;
  }
  if (s.task() == TaskKind::kStack) s.target = s.objects[1];
  s.success = task_satisfied(s);
  return s;
}

}  // namespace storm::env
