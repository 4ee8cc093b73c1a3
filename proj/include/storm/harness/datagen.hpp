#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "storm/core/config.hpp"
#include "storm/core/rng.hpp"
#include "storm/env/expert.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/policy/demos.hpp"
#include "storm/worldmodel/transitions.hpp"

namespace storm::harness {

// Initial-state seeds for generated data start here, far above the 24
// evaluation variations (which use seeds 0..23).
inline constexpr std::uint64_t kDemoSeedBase = 1'000'000;
inline constexpr std::uint64_t kExploreSeedBase = 5'000'000;
inline constexpr std::uint64_t kSeedsPerTask = 100'000;

struct Datasets {
  std::vector<policy::Demonstration> demos;
  std::vector<worldmodel::Transition> transitions;
};

inline env::TaskSpec task_spec(const Config& c, int task, int flaky = 0) {
  env::TaskSpec spec;
  spec.task = static_cast<env::TaskKind>(task);
  spec.n_objects = c.n_objects;
  spec.flaky_grasps = flaky;
  spec.max_steps = c.max_steps;
  spec.shaping_gamma = c.gamma;
  return spec;
}

inline ActionChunk random_chunk(int horizon, Rng& rng) {
  std::vector<ActionStep> steps;
  for (int i = 0; i < horizon; ++i) {
    steps.push_back({rng.uniform(-kMaxDisplacement, kMaxDisplacement), rng.uniform(-kMaxDisplacement, kMaxDisplacement),
                     rng.uniform(-1.0, 1.0)});
  }
  return ActionChunk(std::move(steps));
}

inline int exploration_episodes(const Config& c) {
  return static_cast<int>(std::lround(c.demo_episodes_per_task * c.explore_ratio / (1.0 - c.explore_ratio)));
}

// Expert episodes alternate between the two modes. Exploration episodes
// execute uniformly random chunks. Episode ids are global and increasing, so
// splitting by id keeps whole episodes on one side of a train/held-out split.
inline Datasets generate_datasets(const Config& c) {
  Datasets out;
  int episode = 0;
  for (int task = 0; task < env::kNumTasks; ++task) {
    const env::TaskSpec spec = task_spec(c, task);
    for (int e = 0; e < c.demo_episodes_per_task; ++e, ++episode) {
      const std::uint64_t init = kDemoSeedBase + static_cast<std::uint64_t>(task) * kSeedsPerTask + e;
      Rng noise = rng_stream(c.seed ^ init, "demo-noise");
      const auto mode = static_cast<env::ExpertMode>(e % 2);
      env::WorldState s = env::reset(spec, init);
      while (!s.done()) {
        ActionChunk a = env::scripted_expert(s, mode, c.chunk_h);
        if (c.demo_action_noise > 0.0) {
          std::vector<ActionStep> steps = a.steps();
          for (auto& st : steps) {
            st.dx += c.demo_action_noise * noise.normal();
            st.dy += c.demo_action_noise * noise.normal();
          }
          a = ActionChunk(std::move(steps));
        }
        const Observation obs = env::observe(s);
        const env::StepResult r = env::step(s, a);
        out.demos.push_back({obs, a, static_cast<int>(mode)});
        out.transitions.push_back({obs, a, env::observe(r.state), r.reward, episode, false});
        s = r.state;
      }
    }
    for (int e = 0; e < exploration_episodes(c); ++e, ++episode) {
      const std::uint64_t init = kExploreSeedBase + static_cast<std::uint64_t>(task) * kSeedsPerTask + e;
      Rng rng = rng_stream(c.seed ^ init, "explore");
      env::WorldState s = env::reset(spec, init);
      while (!s.done()) {
        const ActionChunk a = random_chunk(c.chunk_h, rng);
        const Observation obs = env::observe(s);
        const env::StepResult r = env::step(s, a);
        out.transitions.push_back({obs, a, env::observe(r.state), r.reward, episode, true});
        s = r.state;
      }
    }
  }
  return out;
}

// Deterministic episode-level split: an episode is held out when a hash of
// its id falls below the held-out fraction.
inline bool is_heldout(int episode, double fraction) {
  const std::uint64_t h = detail::splitmix64(static_cast<std::uint64_t>(episode) + 0x5eed);
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

}  // namespace storm::harness
