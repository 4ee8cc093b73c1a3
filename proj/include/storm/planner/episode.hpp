#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "storm/core/config.hpp"
#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"
#include "storm/core/trajectory.hpp"
#include "storm/core/types.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/planner/mcts.hpp"
#include "storm/policy/diffusion_policy.hpp"
#include "storm/worldmodel/world_model.hpp"

namespace storm::planner {

enum class Mode { kStorm, kReactive };

inline Mode mode_from_name(std::string_view s) {
  if (s == "storm") return Mode::kStorm;
  if (s == "reactive") return Mode::kReactive;
  throw ValidationError("mode must be 'storm' or 'reactive'");
}

inline std::string_view mode_name(Mode m) { return m == Mode::kStorm ? "storm" : "reactive"; }

inline SearchParams search_params(const Config& c) {
  return {c.n_sim, c.depth_d, c.k_candidates, c.gamma, c.c_puct, c.discounted_backup};
}

// Learned world model behind the planner's transition interface (greedy).
struct LearnedModel {
  const worldmodel::WorldModel* model = nullptr;

  Prediction<Observation> predict(const Observation& obs, const ActionChunk& a) const {
    const auto r = model->rollout(obs, a);
    return {r.next_obs, r.reward};
  }
};

// The simulator itself as a transition model. Hidden state (the grasp
// failure counter) is reset, so it predicts clean-task outcomes.
struct EnvModel {
  env::TaskSpec spec;

  Prediction<Observation> predict(const Observation& obs, const ActionChunk& a) const {
    const env::WorldState s = env::state_from_observation(obs, spec);
    if (s.done()) return {obs, 0.0};
    const env::StepResult r = env::step(s, a);
    return {env::observe(r.state), r.reward};
  }
};

// Diffusion policy as a proposal distribution.
struct PolicyProposer {
  const policy::DiffusionPolicy* policy = nullptr;
  PriorMode prior_mode = PriorMode::kUniform;

  CandidateList<ActionChunk> propose(const Observation& obs, int k, Rng& rng) const {
    return policy->propose(obs, k, rng, prior_mode);
  }
  ActionChunk sample(const Observation& obs, Rng& rng) const { return policy->sample(obs, rng); }
};

template <class P>
concept ReactivePolicy = requires(const P& p, const Observation& o, Rng& rng) {
  { p.sample(o, rng) } -> std::convertible_to<ActionChunk>;
};

struct EpisodeResult {
  Trajectory trajectory;
  std::vector<PlanResult<ActionChunk>> plans;  // storm mode only, when traces are kept
};

// Runs one episode from `initial`, re-planning from the real observation at
// every step. Reactive mode executes one policy sample per step.
template <class Policy, class Model>
  requires ProposalPolicy<Policy, Observation, ActionChunk> && ReactivePolicy<Policy> &&
           TransitionModel<Model, Observation, ActionChunk>
EpisodeResult run_episode(const env::WorldState& initial, const Policy& policy, const Model& model,
                          const SearchParams& sp, Mode mode, Rng& rng, bool keep_traces = false) {
  EpisodeResult out;
  out.trajectory.task_id = initial.task_id;
  env::WorldState s = initial;
  while (!s.done()) {
    const Observation obs = env::observe(s);
    ActionChunk a;
    if (mode == Mode::kStorm) {
      PlanResult<ActionChunk> p = plan<Observation, ActionChunk>(obs, policy, model, sp, rng, keep_traces);
      a = p.chosen;
      if (keep_traces) out.plans.push_back(std::move(p));
    } else {
      a = policy.sample(obs, rng);
    }
    const env::StepResult r = env::step(s, a);
    out.trajectory.steps.push_back({obs, a, r.reward, r.done, r.success});
    s = r.state;
  }
  return out;
}

}  // namespace storm::planner
