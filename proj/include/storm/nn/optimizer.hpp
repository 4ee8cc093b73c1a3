#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "storm/core/error.hpp"
#include "storm/nn/mlp.hpp"

namespace storm::nn {

// AdamW with decoupled weight decay and global-norm gradient clipping.
struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip_norm = 30.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline OptimizerState make_optimizer(const std::vector<ParamRef>& params, double lr, double weight_decay,
                                     double clip_norm) {
  OptimizerState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  s.lr = lr;
  s.weight_decay = weight_decay;
  s.clip_norm = clip_norm;
  return s;
}

struct StepStats {
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

inline double global_norm(const Grads& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

// Clips `grads` in place, then applies one AdamW update with learning rate
// state.lr * lr_scale. A non-finite gradient aborts the step untouched.
inline StepStats optimizer_step(OptimizerState& state, const std::vector<ParamRef>& params, Grads& grads,
                                double lr_scale = 1.0) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("optimizer: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].value->rows() || grads[i].cols() != params[i].value->cols() ||
        state.m[i].rows() != grads[i].rows() || state.m[i].cols() != grads[i].cols()) {
      throw ShapeError("optimizer: shape mismatch for " + params[i].name);
    }
    if (!grads[i].allFinite()) throw TrainingError("non-finite gradient in parameter " + params[i].name);
  }
  StepStats stats;
  stats.grad_norm = global_norm(grads);
  if (stats.grad_norm > state.clip_norm) {
    stats.clip_scale = state.clip_norm / stats.grad_norm;
    for (auto& g : grads) g *= stats.clip_scale;
  }
  ++state.step;
  const double lr = state.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    p *= (1.0 - lr * state.weight_decay);
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    p.array() -= lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + state.eps);
  }
  return stats;
}

// Cosine decay from 1 to `floor` over `total` steps after a linear warmup.
inline double cosine_lr_scale(long step, long total, long warmup = 0, double floor = 0.05) {
  if (warmup > 0 && step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return 1.0;
  const double t = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace storm::nn
