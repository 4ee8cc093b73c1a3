#pragma once

#include <functional>
#include <string>
#include <vector>

#include "storm/core/config.hpp"
#include "storm/core/rng.hpp"
#include "storm/nn/checkpoint.hpp"
#include "storm/nn/optimizer.hpp"
#include "storm/policy/demos.hpp"
#include "storm/policy/diffusion_policy.hpp"
#include "storm/policy/regression_policy.hpp"
#include "storm/worldmodel/world_model.hpp"

namespace storm::harness {

inline constexpr long kWarmupSteps = 200;

// Every training step draws its batch and noise from a stream keyed by the
// step index, so a run resumed from a checkpoint at step s continues exactly
// as the uninterrupted run would.
inline Rng step_stream(std::uint64_t seed, std::string_view label, long step) {
  return rng_stream(seed ^ detail::splitmix64(static_cast<std::uint64_t>(step) + 1), label);
}

inline void save_optimizer(nn::Checkpoint& ck, const std::string& prefix, const nn::OptimizerState& opt) {
  ck.put_scalar(prefix + ".step", static_cast<double>(opt.step));
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    ck.put(prefix + ".m" + std::to_string(i), opt.m[i]);
    ck.put(prefix + ".v" + std::to_string(i), opt.v[i]);
  }
}

inline void load_optimizer(const nn::Checkpoint& ck, const std::string& prefix, nn::OptimizerState& opt) {
  opt.step = static_cast<long>(ck.get_scalar(prefix + ".step"));
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    opt.m[i] = ck.get(prefix + ".m" + std::to_string(i));
    opt.v[i] = ck.get(prefix + ".v" + std::to_string(i));
  }
}

using LossCallback = std::function<void(long step, const std::vector<double>& losses)>;

// Runs policy steps [opt.step, end) with the cosine schedule over c.policy_steps.
inline void train_policy(const Config& c, const std::vector<policy::Demonstration>& demos,
                         policy::DiffusionPolicy& pol, nn::OptimizerState& opt, long end,
                         const LossCallback& log = {}) {
  if (demos.empty()) throw ValidationError("no demonstrations to train on");
  std::vector<const policy::Demonstration*> batch(static_cast<std::size_t>(c.policy_batch));
  while (opt.step < end) {
    const long s = opt.step;
    Rng rng = step_stream(c.seed, "policy-step", s);
    for (auto& b : batch) b = &demos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(demos.size())))];
    const double loss = pol.train_step(batch, rng, opt, nn::cosine_lr_scale(s, c.policy_steps, kWarmupSteps));
    if (log) log(s, {loss});
  }
}

// Mean-regression baseline on the same demonstrations, batches and schedule.
inline policy::RegressionPolicy train_regression_baseline(const Config& c,
                                                         const std::vector<policy::Demonstration>& demos,
                                                         long steps) {
  if (demos.empty()) throw ValidationError("no demonstrations to train on");
  Rng init = rng_stream(c.seed, "regression-init");
  policy::RegressionPolicy reg(Observation::feature_dim(c.n_objects), c.chunk_h, c.policy_hidden, init);
  nn::OptimizerState opt = nn::make_optimizer(reg.params(), c.policy_lr, c.weight_decay, c.clip_norm);
  std::vector<const policy::Demonstration*> batch(static_cast<std::size_t>(c.policy_batch));
  for (long s = 0; s < steps; ++s) {
    Rng rng = step_stream(c.seed, "policy-step", s);
    for (auto& b : batch) b = &demos[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(demos.size())))];
    reg.train_step(batch, opt, nn::cosine_lr_scale(s, steps, kWarmupSteps));
  }
  return reg;
}

inline nn::OptimizerState policy_optimizer(const Config& c, policy::DiffusionPolicy& pol) {
  return nn::make_optimizer(pol.params(), c.policy_lr, c.weight_decay, c.clip_norm);
}

inline nn::OptimizerState world_model_optimizer(const Config& c, worldmodel::WorldModel& wm) {
  return nn::make_optimizer(wm.params(), c.wm_lr, c.weight_decay, c.clip_norm);
}

// Runs world-model steps [opt.step, end); the logged losses are
// {L_video, L_reward, total}.
inline void train_world_model(const Config& c, const worldmodel::EncodedBatch& data, double lambda,
                              worldmodel::WorldModel& wm, nn::OptimizerState& opt, long end,
                              const LossCallback& log = {}) {
  if (data.size() == 0) throw ValidationError("no transitions to train on");
  std::vector<int> idx(static_cast<std::size_t>(c.wm_batch));
  while (opt.step < end) {
    const long s = opt.step;
    Rng rng = step_stream(c.seed, "wm-step", s);
    for (int& i : idx) i = rng.uniform_int(data.size());
    const auto l = wm.hybrid_train_step(data.subset(idx), lambda, opt, nn::cosine_lr_scale(s, c.wm_steps, kWarmupSteps));
    if (log) log(s, {l.video, l.reward, l.total});
  }
}

}  // namespace storm::harness
