#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/config.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/harness/pipeline.hpp"
#include "storm/planner/episode.hpp"

namespace storm::harness {

// Flaky-grasp recovery scenario: the same episode stream is played once
// reactively and once with search, and the logs are checked for the
// loop-then-recover pattern.
inline constexpr int kCaseFlaky = 2;
inline constexpr int kCaseSeeds = 5;
inline constexpr int kMinRepeatedGrasps = 3;

struct GraspAttempts {
  int attempts = 0;  // chunks that close the gripper while empty-handed
};

inline int count_grasp_attempts(const Trajectory& t) {
  int n = 0;
  for (const auto& s : t.steps) {
    if (s.obs.holding) continue;
    for (const auto& a : s.action.steps()) {
      if (a.g < 0.0) {
        ++n;
        break;
      }
    }
  }
  return n;
}

// A simulation whose root edge differs from the executed one and whose
// backed-up root return fell below the executed edge's final Q.
struct RecoveryEvent {
  int step = -1;
  int simulation = -1;
  int rejected_edge = -1;
  double rejected_return = 0.0;
  int chosen_edge = -1;
  double chosen_q = 0.0;
};

inline std::vector<RecoveryEvent> find_recovery_events(const std::vector<planner::PlanResult<ActionChunk>>& plans) {
  std::vector<RecoveryEvent> out;
  for (std::size_t step = 0; step < plans.size(); ++step) {
    const auto& p = plans[step];
    std::vector<double> sum(p.visits.size(), 0.0);
    for (const auto& t : p.trace) {
      if (t.path.empty()) continue;
      const auto e = static_cast<std::size_t>(t.path.front());
      // Undo the running mean to recover this simulation's root return.
      const double g = t.q.front() * t.n.front() - sum[e];
      sum[e] += g;
      if (static_cast<int>(e) != p.chosen_index && g < p.q[static_cast<std::size_t>(p.chosen_index)]) {
        out.push_back({static_cast<int>(step), t.simulation, static_cast<int>(e), g, p.chosen_index,
                       p.q[static_cast<std::size_t>(p.chosen_index)]});
      }
    }
  }
  return out;
}

struct CaseResult {
  int seed_index = 0;
  int variation = 0;
  int repeat = 0;
  bool reactive_success = false;
  int reactive_length = 0;
  int reactive_grasp_attempts = 0;
  bool storm_success = false;
  int storm_length = 0;
  std::vector<RecoveryEvent> events;

  bool reactive_loops(int max_steps) const {
    return !reactive_success && reactive_length >= max_steps && reactive_grasp_attempts >= kMinRepeatedGrasps;
  }
  bool shows_recovery(int max_steps) const { return reactive_loops(max_steps) && storm_success && !events.empty(); }
};

// Seed i plays variation i with the eval stream of repeat i % eval_repeats.
inline std::pair<int, int> case_episode(const Config& c, int i) { return {i, i % c.eval_repeats}; }

inline CaseResult run_case(const Config& c, const Models& models, int i) {
  const auto [v, r] = case_episode(c, i);
  const int task = static_cast<int>(env::TaskKind::kPutOnTarget);
  env::TaskSpec spec = task_spec(c, task, kCaseFlaky);
  spec.variation_id = v;
  const planner::PolicyProposer proposer{&models.policy, c.prior()};
  const planner::LearnedModel model{&models.world_model};
  const planner::SearchParams sp = planner::search_params(c);

  CaseResult out;
  out.seed_index = i;
  out.variation = v;
  out.repeat = r;
  Rng ra = episode_stream(c, task, kCaseFlaky, v, r);
  const auto re = planner::run_episode(env::reset(spec), proposer, model, sp, planner::Mode::kReactive, ra);
  out.reactive_success = re.trajectory.succeeded();
  out.reactive_length = static_cast<int>(re.trajectory.steps.size());
  out.reactive_grasp_attempts = count_grasp_attempts(re.trajectory);

  Rng rb = episode_stream(c, task, kCaseFlaky, v, r);
  const auto st = planner::run_episode(env::reset(spec), proposer, model, sp, planner::Mode::kStorm, rb, true);
  out.storm_success = st.trajectory.succeeded();
  out.storm_length = static_cast<int>(st.trajectory.steps.size());
  out.events = find_recovery_events(st.plans);
  return out;
}

inline std::vector<CaseResult> run_case_study(const Config& c, const Models& models) {
  std::vector<CaseResult> out;
  for (int i = 0; i < kCaseSeeds; ++i) out.push_back(run_case(c, models, i));
  return out;
}

inline nlohmann::json case_to_json(const CaseResult& r, int max_steps) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : r.events) {
    ev.push_back({{"step", e.step},
                  {"simulation", e.simulation},
                  {"rejected_edge", e.rejected_edge},
                  {"rejected_return", e.rejected_return},
                  {"chosen_edge", e.chosen_edge},
                  {"chosen_q", e.chosen_q}});
  }
  return {{"seed_index", r.seed_index},
          {"variation", r.variation},
          {"repeat", r.repeat},
          {"reactive", {{"success", r.reactive_success},
                        {"length", r.reactive_length},
                        {"grasp_attempts", r.reactive_grasp_attempts},
                        {"loops_until_timeout", r.reactive_loops(max_steps)}}},
          {"storm", {{"success", r.storm_success}, {"length", r.storm_length}, {"recovery_events", ev}}},
          {"shows_recovery", r.shows_recovery(max_steps)}};
}

}  // namespace storm::harness
