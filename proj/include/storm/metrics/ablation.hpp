#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/config.hpp"
#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"
#include "storm/env/render.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/metrics/metrics.hpp"
#include "storm/worldmodel/transitions.hpp"
#include "storm/worldmodel/world_model.hpp"

namespace storm::metrics {

// A contiguous episode rebuilt from its transitions.
struct EpisodeSeq {
  int episode = 0;
  int task = 0;
  std::vector<Observation> obs;  // one more than actions
  std::vector<ActionChunk> actions;
  std::vector<double> rewards;
};

inline std::vector<EpisodeSeq> group_episodes(std::span<const worldmodel::Transition> ts) {
  std::vector<EpisodeSeq> out;
  for (const auto& t : ts) {
    if (out.empty() || out.back().episode != t.episode || out.back().obs.back() != t.obs) {
      out.push_back({t.episode, t.obs.task_id, {t.obs}, {}, {}});
    }
    out.back().obs.push_back(t.next_obs);
    out.back().actions.push_back(t.action);
    out.back().rewards.push_back(t.reward);
  }
  return out;
}

struct ArmMetrics {
  std::string arm;
  std::vector<double> fd_traj;  // per task
  double fd_traj_total = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> reward_mse;
  int windows = 0;
  int transitions = 0;
};

// FD-traj per task: windows of kTrajWindow observations from held-out
// episodes versus windows whose last kTrajWindow - 1 entries come from
// sampled (non-greedy) world-model rollouts driven by the recorded actions.
// Every window's rollout uses its own stream keyed by (seed, episode, start),
// so two models are compared on identical randomness. PSNR, SSIM and reward
// error use greedy one-step predictions on every held-out transition.
inline ArmMetrics evaluate_world_model(const std::string& arm, const worldmodel::WorldModel& wm,
                                       std::span<const EpisodeSeq> episodes, const Config& c, bool reward_head) {
  ArmMetrics m;
  m.arm = arm;
  std::map<int, std::vector<std::vector<double>>> real, generated;
  double psnr_sum = 0.0, ssim_sum = 0.0, sq = 0.0;
  for (const auto& ep : episodes) {
    const auto spec_obs = [&](const Observation& o) {
      env::TaskSpec spec;
      spec.task = static_cast<env::TaskKind>(o.task_id);
      spec.max_steps = c.max_steps;
      spec.shaping_gamma = c.gamma;
      return env::render(env::state_from_observation(o, spec));
    };
    for (std::size_t i = 0; i + kTrajWindow <= ep.obs.size(); ++i) {
      std::vector<Observation> gen{ep.obs[i]};
      Rng rng = rng_stream(c.seed ^ detail::splitmix64(static_cast<std::uint64_t>(ep.episode) * 4096 + i), "fd-traj");
      for (int k = 0; k + 1 < kTrajWindow; ++k) {
        gen.push_back(wm.rollout(gen.back(), ep.actions[i + static_cast<std::size_t>(k)], &rng, false).next_obs);
      }
      const auto rw = window_features(std::span<const Observation>(ep.obs).subspan(i, kTrajWindow));
      const auto gw = window_features(gen);
      real[ep.task].push_back(rw.front());
      generated[ep.task].push_back(gw.front());
      ++m.windows;
    }
    for (std::size_t i = 0; i < ep.actions.size(); ++i) {
      const auto pred = wm.rollout(ep.obs[i], ep.actions[i]);
      const env::Frame fp = spec_obs(pred.next_obs);
      const env::Frame fr = spec_obs(ep.obs[i + 1]);
      psnr_sum += psnr(fp, fr);
      ssim_sum += ssim(fp, fr);
      sq += (pred.reward - ep.rewards[i]) * (pred.reward - ep.rewards[i]);
      ++m.transitions;
    }
  }
  if (m.transitions == 0) throw ValidationError("no held-out transitions to evaluate");
  for (auto& [task, rw] : real) {
    const double fd = frechet_distance(summarize(rw), summarize(generated[task]));
    if (static_cast<int>(m.fd_traj.size()) <= task) m.fd_traj.resize(static_cast<std::size_t>(task) + 1, 0.0);
    m.fd_traj[static_cast<std::size_t>(task)] = fd;
    m.fd_traj_total += fd;
  }
  m.psnr = psnr_sum / m.transitions;
  m.ssim = ssim_sum / m.transitions;
  if (reward_head) m.reward_mse = sq / m.transitions;
  return m;
}

struct AblationArm {
  std::string name;
  const worldmodel::WorldModel* model = nullptr;
  Config config;
  bool reward_head = true;
};

struct AblationReport {
  ArmMetrics a;
  ArmMetrics b;
  double fd_delta = 0.0;  // b.fd_traj_total - a.fd_traj_total
};

// Both arms must come from the same configuration apart from the reward weight.
inline AblationReport ablation_compare(const AblationArm& a, const AblationArm& b, std::span<const EpisodeSeq> eval) {
  Config ca = a.config, cb = b.config;
  ca.lambda_reward = cb.lambda_reward = 0.0;
  if (!(ca == cb)) throw UsageError("ablation arms were trained under different configurations");
  AblationReport r;
  r.a = evaluate_world_model(a.name, *a.model, eval, a.config, a.reward_head);
  r.b = evaluate_world_model(b.name, *b.model, eval, b.config, b.reward_head);
  r.fd_delta = r.b.fd_traj_total - r.a.fd_traj_total;
  return r;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// One row per arm: arm,fd_traj_<task>...,fd_traj_total,psnr,ssim,reward_mse
// (reward_mse is empty for an arm without a trained reward head). LPIPS is not
// computed.
inline std::string ablation_csv(const AblationReport& r) {
  std::ostringstream out;
  out << "arm";
  for (std::size_t t = 0; t < r.a.fd_traj.size(); ++t) out << ",fd_traj_" << env::task_name(static_cast<env::TaskKind>(t));
  out << ",fd_traj_total,psnr,ssim,reward_mse\n";
  for (const ArmMetrics* m : {&r.a, &r.b}) {
    out << m->arm;
    for (double v : m->fd_traj) out << "," << fmt(v);
    out << "," << fmt(m->fd_traj_total) << "," << fmt(m->psnr) << "," << fmt(m->ssim) << ","
        << (m->reward_mse ? fmt(*m->reward_mse) : "") << "\n";
  }
  return out.str();
}

// Long format for radar charts: arm,metric,value.
inline std::string ablation_long_csv(const AblationReport& r) {
  std::ostringstream out;
  out << "arm,metric,value\n";
  for (const ArmMetrics* m : {&r.a, &r.b}) {
    out << m->arm << ",fd_traj," << fmt(m->fd_traj_total) << "\n";
    out << m->arm << ",psnr," << fmt(m->psnr) << "\n";
    out << m->arm << ",ssim," << fmt(m->ssim) << "\n";
    if (m->reward_mse) out << m->arm << ",reward_mse," << fmt(*m->reward_mse) << "\n";
  }
  return out.str();
}

inline nlohmann::json arm_to_json(const ArmMetrics& m) {
  nlohmann::json j = {{"arm", m.arm},       {"fd_traj", m.fd_traj}, {"fd_traj_total", m.fd_traj_total},
                      {"psnr", m.psnr},     {"ssim", m.ssim},       {"windows", m.windows},
                      {"transitions", m.transitions}};
  j["reward_mse"] = m.reward_mse ? nlohmann::json(*m.reward_mse) : nlohmann::json(nullptr);
  return j;
}

}  // namespace storm::metrics
