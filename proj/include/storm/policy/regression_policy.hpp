#pragma once

#include <span>
#include <vector>

#include "storm/core/rng.hpp"
#include "storm/core/types.hpp"
#include "storm/nn/mlp.hpp"
#include "storm/nn/optimizer.hpp"
#include "storm/policy/diffusion_policy.hpp"

namespace storm::policy {

// Deterministic behaviour-cloning baseline: the denoiser's architecture
// regressed directly onto demonstrated chunks with squared error.
class RegressionPolicy {
 public:
  RegressionPolicy(int feature_dim, int horizon, const std::vector<int>& hidden, Rng& init)
      : feature_dim_(feature_dim), horizon_(horizon) {
    std::vector<int> dims{feature_dim + kTaskEmbedDim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(3 * horizon);
    net_ = nn::Mlp(dims, init);
    task_table_ = Matrix(kTaskEmbedDim, kNumTaskSlots);
    for (Eigen::Index c = 0; c < task_table_.cols(); ++c) {
      for (Eigen::Index r = 0; r < task_table_.rows(); ++r) task_table_(r, c) = init.uniform(-1.0, 1.0);
    }
  }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out{{"task_embedding", &task_table_}};
    net_.append_params("regressor.", out);
    return out;
  }

  double train_step(std::span<const Demonstration* const> batch, nn::OptimizerState& opt, double lr_scale = 1.0) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    Matrix in(net_.input_dim(), n), target(3 * horizon_, n);
    std::vector<int> tasks(batch.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      const Demonstration& d = *batch[static_cast<std::size_t>(j)];
      in.col(j) = input(d.obs);
      target.col(j) = normalize_chunk(d.chunk);
      tasks[static_cast<std::size_t>(j)] = d.obs.task_id;
    }
    nn::MlpTape tape;
    const Matrix diff = net_.forward(in, &tape) - target;
    const double loss = diff.squaredNorm() / static_cast<double>(n);
    auto ps = params();
    nn::Grads grads = nn::zeros_like(ps);
    const Matrix g_in = net_.backward(tape, (2.0 / static_cast<double>(n)) * diff, std::span<Matrix>(grads).subspan(1));
    for (Eigen::Index j = 0; j < n; ++j) {
      grads[0].col(tasks[static_cast<std::size_t>(j)]) += g_in.block(feature_dim_, j, kTaskEmbedDim, 1);
    }
    nn::optimizer_step(opt, ps, grads, lr_scale);
    return loss;
  }

  ActionChunk predict(const Observation& obs) const { return denormalize_chunk(net_.forward(input(obs))); }

 private:
  Vector input(const Observation& obs) const {
    const auto f = obs.features();
    Vector v(feature_dim_ + kTaskEmbedDim);
    v.head(feature_dim_) = Eigen::Map<const Vector>(f.data(), feature_dim_);
    v.tail(kTaskEmbedDim) = task_table_.col(obs.task_id);
    return v;
  }

  int feature_dim_;
  int horizon_;
  nn::Mlp net_;
  Matrix task_table_;
};

}  // namespace storm::policy
