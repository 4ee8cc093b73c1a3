#include <gtest/gtest.h>

#include <cmath>

#include "storm/core/rng.hpp"
#include "storm/env/expert.hpp"
#include "storm/env/render.hpp"
#include "storm/env/tabletop.hpp"

using namespace storm;
using namespace storm::env;

namespace {

WorldState grasp_scene(int counter) {
  WorldState s;
  s.gripper = {0.5, 0.5};
  s.objects = {{0.52, 0.5}, {0.2, 0.8}};
  s.target = {0.8, 0.2};
  s.grasp_fail_counter = counter;
  return s;
}

ActionChunk single(double dx, double dy, double g) { return ActionChunk({{dx, dy, g}}); }

}  // namespace

TEST(Reset, DeterministicAndVaried) {
  TaskSpec spec;
  spec.variation_id = 5;
  EXPECT_EQ(reset(spec), reset(spec));
  TaskSpec a, b;
  b.variation_id = 1;
  EXPECT_NE(reset(a).objects[0], reset(b).objects[0]);
}

TEST(Reset, FlakyCounterAndPlacementRules) {
  for (int task = 0; task < kNumTasks; ++task) {
    for (int v = 0; v < 24; ++v) {
      TaskSpec spec;
      spec.task = static_cast<TaskKind>(task);
      spec.variation_id = v;
      spec.flaky_grasps = 2;
      const WorldState s = reset(spec);
      EXPECT_EQ(s.grasp_fail_counter, 2);
      std::vector<Vec2> pts = {s.gripper};
      pts.insert(pts.end(), s.objects.begin(), s.objects.end());
      if (spec.task != TaskKind::kStack) pts.push_back(s.target);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_GE(pts[i].x, 0.1);
        EXPECT_LE(pts[i].x, 0.9);
        EXPECT_GE(pts[i].y, 0.1);
        EXPECT_LE(pts[i].y, 0.9);
        for (std::size_t j = 0; j < i; ++j) EXPECT_GT(distance(pts[i], pts[j]), 2 * kObjectRadius);
      }
    }
  }
}

TEST(Reset, InvalidSpecsRejected) {
  TaskSpec spec;
  spec.variation_id = 24;
  EXPECT_THROW(reset(spec), SpecError);
  spec.variation_id = 0;
  spec.n_objects = 1;
  EXPECT_THROW(reset(spec), SpecError);
  spec.n_objects = 40;  // cannot place 42 points 0.15 apart inside [0.1, 0.9]^2
  EXPECT_THROW(reset(spec), SpecError);
}

TEST(Step, CloseNearObjectGrasps) {
  const auto r = step(grasp_scene(0), single(0, 0, -1));
  EXPECT_EQ(r.state.holding, 0);
  EXPECT_EQ(r.state.objects[0], r.state.gripper);
}

TEST(Step, FlakyGraspFailsAndNudges) {
  const auto r = step(grasp_scene(1), single(0, 0, -1));
  EXPECT_EQ(r.state.holding, -1);
  EXPECT_EQ(r.state.grasp_fail_counter, 0);
  EXPECT_GE(distance(r.state.objects[0], r.state.gripper), 0.02 + 0.02 - 1e-12);
}

TEST(Step, GripperClampsAtBorder) {
  WorldState s = grasp_scene(0);
  s.gripper = {0.95, 0.5};
  const auto r = step(s, single(0.5, 0, 1));
  EXPECT_DOUBLE_EQ(r.state.gripper.x, 1.0);
}

TEST(Step, OpenReleasesInPlace) {
  WorldState s = grasp_scene(0);
  s = step(s, single(0, 0, -1)).state;
  s = step(s, single(0.1, 0.0, -1)).state;
  EXPECT_EQ(s.holding, 0);
  EXPECT_EQ(s.objects[0], s.gripper);
  // The move happens before the gripper opens, so the object travels with it.
  s = step(s, single(0.0, 0.1, 1)).state;
  EXPECT_EQ(s.holding, -1);
  EXPECT_NEAR(s.objects[0].x, 0.6, 1e-12);
  EXPECT_NEAR(s.objects[0].y, 0.6, 1e-12);
  s = step(s, single(0.0, -0.1, 1)).state;
  EXPECT_NEAR(s.objects[0].y, 0.6, 1e-12);
}

TEST(Step, DoneStateRejectsStep) {
  WorldState s = grasp_scene(0);
  s.max_steps = 1;
  s = step(s, single(0, 0, 1)).state;
  EXPECT_TRUE(s.done());
  EXPECT_THROW(step(s, single(0, 0, 1)), UsageError);
}

TEST(Step, RandomActionsKeepInvariants) {
  Rng rng = rng_stream(9, "env-invariants");
  for (int ep = 0; ep < 50; ++ep) {
    TaskSpec spec;
    spec.task = static_cast<TaskKind>(ep % 3);
    spec.variation_id = ep % 24;
    spec.flaky_grasps = ep % 3;
    WorldState s = reset(spec);
    while (!s.done()) {
      std::vector<ActionStep> a;
      for (int i = 0; i < 4; ++i) a.push_back({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-1, 1)});
      const auto r = step(s, ActionChunk(a));
      s = r.state;
      EXPECT_EQ(r.done, r.state.done());
      if (r.success) {
        EXPECT_TRUE(r.done);
      }
      for (const auto& o : s.objects) {
        EXPECT_TRUE(o.x >= 0 && o.x <= 1 && o.y >= 0 && o.y <= 1);
      }
      if (s.holding >= 0) {
        EXPECT_EQ(s.objects[static_cast<std::size_t>(s.holding)], s.gripper);
      }
      const Observation o = observe(s);
      EXPECT_TRUE(o.holding == 0 || o.holding == 1);
      EXPECT_EQ(o.feature_dim(), 9);
    }
  }
}

TEST(Reward, ShapingTelescopesPerEpisode) {
  for (int v = 0; v < 24; ++v) {
    TaskSpec spec;
    spec.variation_id = v;
    WorldState s = reset(spec);
    const double gamma = s.shaping_gamma;
    std::vector<double> phi = {potential(s)};
    double total = 0.0, bonus = 0.0;
    while (!s.done()) {
      WorldState sim = s;
      const ActionChunk a = scripted_expert(s, ExpertMode::kLeft, 4);
      for (const auto& sub : a.steps()) {
        if (sim.success) break;
        apply_substep(sim, sub);
        phi.push_back(potential(sim));
        if (sim.success) bonus += kSuccessBonus;
      }
      const auto r = step(s, a);
      total += r.reward;
      s = r.state;
    }
    // sum_i (g*phi_{i+1} - phi_i) = g*phi_n - phi_0 + (g - 1) * sum_{0<i<n} phi_i
    double inner = 0.0;
    for (std::size_t i = 1; i + 1 < phi.size(); ++i) inner += phi[i];
    const double expected = gamma * phi.back() - phi.front() + (gamma - 1.0) * inner + bonus;
    EXPECT_NEAR(total, expected, 1e-9);
    EXPECT_EQ(bonus, kSuccessBonus);
  }
}

TEST(Observe, ReflectsState) {
  WorldState s = grasp_scene(0);
  EXPECT_EQ(observe(s).holding, 0);
  EXPECT_EQ(observe(s), observe(s));
  s = step(s, single(0, 0, -1)).state;
  const Observation o = observe(s);
  EXPECT_EQ(o.holding, 1);
  EXPECT_EQ(o.objects[0], o.gripper);
}

TEST(Observe, StateReconstructionRoundTrip) {
  WorldState s = grasp_scene(0);
  s = step(s, single(0, 0, -1)).state;
  const WorldState back = state_from_observation(observe(s), TaskSpec{});
  EXPECT_EQ(back.holding, 0);
  EXPECT_EQ(back.objects, s.objects);
  EXPECT_EQ(back.gripper, s.gripper);
}

TEST(Render, EmptySceneShowsOnlyRingAndGripper) {
  WorldState s;
  s.gripper = {0.05, 0.95};
  s.target = {0.5, 0.5};
  const Frame f = render(s);
  int ring = 0;
  for (int r = 0; r < kFrameSize; ++r) {
    for (int c = 0; c < kFrameSize; ++c) {
      const double v = f.at(r, c);
      if (r == 0 && c == 0) {
        EXPECT_EQ(v, kGripperIntensity);
      } else {
        EXPECT_TRUE(v == 0.0 || v == kRingIntensity);
        ring += v == kRingIntensity;
      }
    }
  }
  EXPECT_GT(ring, 0);
  EXPECT_EQ(render(s), f);
}

TEST(Render, MovingGripperOneCellChangesOnlyGripperPixels) {
  WorldState s = grasp_scene(0);
  s.gripper = {0.1 + 0.5 / 16, 0.1 + 0.5 / 16};
  WorldState t = s;
  t.gripper.x += 1.0 / 16;
  const Frame a = render(s), b = render(t);
  int changed = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) changed += a.pixels[i] != b.pixels[i];
  EXPECT_EQ(changed, 2);
  for (double v : a.pixels) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Render, PgmHeader) {
  const std::string pgm = to_pgm(render(grasp_scene(0)));
  EXPECT_EQ(pgm.rfind("P5\n16 16\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n16 16\n255\n").size() + 256);
}

TEST(Expert, ConvergedWhenObjectAtTarget) {
  WorldState s = grasp_scene(0);
  s.objects[0] = s.target;
  s.success = task_satisfied(s);
  const ActionChunk a = scripted_expert(s, ExpertMode::kLeft, 4);
  for (const auto& st : a.steps()) {
    EXPECT_NEAR(st.dx, 0.0, 1e-12);
    EXPECT_NEAR(st.dy, 0.0, 1e-12);
    EXPECT_EQ(st.g, 1.0);
  }
}

TEST(Expert, ModesCurlOppositeWays) {
  WorldState s;
  s.gripper = {0.2, 0.5};
  s.objects = {{0.7, 0.5}, {0.5, 0.85}};
  s.target = {0.5, 0.2};
  const double left = scripted_expert(s, ExpertMode::kLeft, 4)[0].dy;
  const double right = scripted_expert(s, ExpertMode::kRight, 4)[0].dy;
  EXPECT_GT(left, 0.0);
  EXPECT_LT(right, 0.0);
}

TEST(Expert, SolvesEveryVariationOfEveryTask) {
  for (int task = 0; task < kNumTasks; ++task) {
    for (int mode = 0; mode < 2; ++mode) {
      for (int v = 0; v < 24; ++v) {
        TaskSpec spec;
        spec.task = static_cast<TaskKind>(task);
        spec.variation_id = v;
        WorldState s = reset(spec);
        while (!s.done()) s = step(s, scripted_expert(s, static_cast<ExpertMode>(mode), 4)).state;
        EXPECT_TRUE(s.success) << task_name(spec.task) << " variation " << v << " mode " << mode;
      }
    }
  }
}

TEST(Flaky, RepeatingTheFailedGraspNeverSucceeds) {
  for (int v = 0; v < 24; ++v) {
    TaskSpec spec;
    spec.variation_id = v;
    spec.flaky_grasps = 2;
    WorldState s = reset(spec);
    while (distance(s.gripper, s.objects[0]) > kGraspSnapDistance) {
      s = step(s, scripted_expert(s, ExpertMode::kLeft, 1)).state;
    }
    // The chunk that fails: close in place over the object, then carry.
    const Vec2 d = s.target - s.gripper;
    const ActionChunk loop({{0, 0, -1}, {0, 0, 1}, {d.x, d.y, 1}, {-d.x, -d.y, 1}});
    while (!s.done()) s = step(s, loop).state;
    EXPECT_FALSE(s.success) << "variation " << v;
  }
}
