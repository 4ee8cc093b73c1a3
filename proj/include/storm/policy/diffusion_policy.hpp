#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "storm/core/candidates.hpp"
#include "storm/core/config.hpp"
#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"
#include "storm/core/types.hpp"
#include "storm/nn/checkpoint.hpp"
#include "storm/nn/mlp.hpp"
#include "storm/nn/optimizer.hpp"
#include "storm/policy/demos.hpp"
#include "storm/policy/noise_schedule.hpp"

namespace storm::policy {

using nn::Matrix;
using nn::Vector;

inline constexpr int kTimeEmbedDim = 8;
inline constexpr int kTaskEmbedDim = 4;
inline constexpr int kNumTaskSlots = 3;

// Actions are modelled in a normalized space where every coordinate lies in
// [-1, 1]: displacements are divided by their bound, the gripper is kept.
inline Vector normalize_chunk(const ActionChunk& a) {
  const auto flat = a.flatten();
  Vector v(static_cast<Eigen::Index>(flat.size()));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = (i % 3 == 2) ? flat[i] : flat[i] / kMaxDisplacement;
  }
  return v;
}

inline ActionChunk denormalize_chunk(const Eigen::Ref<const Vector>& v) {
  std::vector<double> flat(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double c = std::clamp(v[i], -1.0, 1.0);
    flat[static_cast<std::size_t>(i)] = (i % 3 == 2) ? c : c * kMaxDisplacement;
  }
  return ActionChunk::from_flat(flat);
}

// Sinusoidal embedding of the diffusion step, frequencies 1000^(-i/4).
inline void time_embedding(int t, Eigen::Ref<Vector> out) {
  for (int i = 0; i < kTimeEmbedDim / 2; ++i) {
    const double w = std::pow(1000.0, -static_cast<double>(i) / (kTimeEmbedDim / 2));
    out[2 * i] = std::sin(t * w);
    out[2 * i + 1] = std::cos(t * w);
  }
}

// One draw of (t, eps, x_t) for the denoising objective.
struct NoiseDraw {
  int t = 1;
  Vector eps;
  Vector xt;
};

inline NoiseDraw draw_training_noise(const NoiseSchedule& s, const Vector& x0, Rng& rng) {
  NoiseDraw d;
  d.t = 1 + std::min(s.steps - 1, rng.uniform_int(s.steps));
  d.eps.resize(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) d.eps[i] = rng.normal();
  d.xt = forward_noise(s, x0, d.t, d.eps);
  return d;
}

// Squared error between the drawn noise and a prediction of it.
inline double denoising_error(const Vector& eps, const Vector& predicted) { return (eps - predicted).squaredNorm(); }

// Denoising diffusion policy over flattened action chunks, conditioned on
// observation features and a learned task embedding.
class DiffusionPolicy {
 public:
  DiffusionPolicy() = default;

  DiffusionPolicy(NoiseSchedule schedule, int feature_dim, int horizon, const std::vector<int>& hidden, Rng& init)
      : schedule_(std::move(schedule)), feature_dim_(feature_dim), horizon_(horizon) {
    std::vector<int> dims{input_dim()};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(action_dim());
    net_ = nn::Mlp(dims, init);
    task_table_ = Matrix(kTaskEmbedDim, kNumTaskSlots);
    for (Eigen::Index c = 0; c < task_table_.cols(); ++c) {
      for (Eigen::Index r = 0; r < task_table_.rows(); ++r) task_table_(r, c) = init.uniform(-1.0, 1.0);
    }
  }

  static DiffusionPolicy from_config(const Config& c, Rng& init) {
    return DiffusionPolicy(NoiseSchedule::linear(c.diffusion_steps_t, c.beta_start, c.beta_end),
                           Observation::feature_dim(c.n_objects), c.chunk_h, c.policy_hidden, init);
  }

  const NoiseSchedule& schedule() const { return schedule_; }
  int horizon() const { return horizon_; }
  int action_dim() const { return 3 * horizon_; }
  int feature_dim() const { return feature_dim_; }
  int input_dim() const { return action_dim() + kTimeEmbedDim + feature_dim_ + kTaskEmbedDim; }
  const nn::Mlp& network() const { return net_; }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out{{"task_embedding", &task_table_}};
    net_.append_params("denoiser.", out);
    return out;
  }

  // Noise prediction for a batch; column j uses step t[j] and condition j.
  Matrix predict_noise(const Matrix& xt, std::span<const int> t, const Matrix& features, std::span<const int> tasks,
                       nn::MlpTape* tape = nullptr) const {
    return net_.forward(assemble_input(xt, t, features, tasks), tape);
  }

  // Mean denoising loss over the batch; accumulates gradients when requested.
  double loss(const Matrix& x0, const Matrix& features, std::span<const int> tasks, Rng& rng,
              nn::Grads* grads = nullptr) const {
    const Eigen::Index n = x0.cols();
    Matrix xt(x0.rows(), n), eps(x0.rows(), n);
    std::vector<int> t(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      NoiseDraw d = draw_training_noise(schedule_, x0.col(j), rng);
      t[static_cast<std::size_t>(j)] = d.t;
      eps.col(j) = d.eps;
      xt.col(j) = d.xt;
    }
    return loss_given_noise(xt, eps, t, features, tasks, grads);
  }

  // Same objective with the noise draw fixed, so it is a deterministic function
  // of the parameters (used for gradient checks).
  double loss_given_noise(const Matrix& xt, const Matrix& eps, std::span<const int> t, const Matrix& features,
                          std::span<const int> tasks, nn::Grads* grads = nullptr) const {
    nn::MlpTape tape;
    const Matrix pred = predict_noise(xt, t, features, tasks, grads ? &tape : nullptr);
    const Matrix diff = pred - eps;
    const double n = static_cast<double>(xt.cols());
    const double loss = diff.squaredNorm() / n;
    if (!std::isfinite(loss)) throw TrainingError("non-finite diffusion loss");
    if (grads) {
      const Matrix upstream = (2.0 / n) * diff;
      const Matrix input_grad = net_.backward(tape, upstream, std::span<Matrix>(*grads).subspan(1));
      const Eigen::Index off = action_dim() + kTimeEmbedDim + feature_dim_;
      for (Eigen::Index j = 0; j < xt.cols(); ++j) {
        (*grads)[0].col(tasks[static_cast<std::size_t>(j)]) += input_grad.block(off, j, kTaskEmbedDim, 1);
      }
    }
    return loss;
  }

  // One optimizer step on a batch of demonstrations; returns the batch loss.
  double train_step(std::span<const Demonstration* const> batch, Rng& rng, nn::OptimizerState& opt,
                    double lr_scale = 1.0) {
    Matrix x0, feats;
    std::vector<int> tasks;
    pack_batch(batch, x0, feats, tasks);
    auto ps = params();
    nn::Grads grads = nn::zeros_like(ps);
    const double l = loss(x0, feats, tasks, rng, &grads);
    nn::optimizer_step(opt, ps, grads, lr_scale);
    return l;
  }

  // Ancestral sampling of n chunks for one observation, all denoised in one batch.
  std::vector<ActionChunk> sample_batch(const Observation& obs, int n, Rng& rng) const {
    const Matrix x0 = sample_normalized(obs, n, rng);
    std::vector<ActionChunk> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) out.push_back(denormalize_chunk(x0.col(j)));
    return out;
  }

  ActionChunk sample(const Observation& obs, Rng& rng) const { return sample_batch(obs, 1, rng).front(); }

  // K candidates with priors. Near-duplicates (L-inf < 1e-3) are redrawn for up
  // to five rounds, after which duplicates are kept.
  CandidateList<ActionChunk> propose(const Observation& obs, int k, Rng& rng,
                                     PriorMode mode = PriorMode::kUniform) const {
    if (k < 1) throw ValidationError("propose needs k >= 1");
    std::vector<ActionChunk> chunks = sample_batch(obs, k, rng);
    for (int round = 0; round < 5; ++round) {
      std::vector<int> dup;
      for (int i = 1; i < k; ++i) {
        for (int j = 0; j < i; ++j) {
          if (chunks[i].linf_distance(chunks[j]) < 1e-3) {
            dup.push_back(i);
            break;
          }
        }
      }
      if (dup.empty()) break;
      const auto fresh = sample_batch(obs, static_cast<int>(dup.size()), rng);
      for (std::size_t i = 0; i < dup.size(); ++i) chunks[dup[i]] = fresh[i];
    }
    const std::vector<double> priors = candidate_priors(chunks, mode);
    CandidateList<ActionChunk> out;
    for (int i = 0; i < k; ++i) out.push_back({std::move(chunks[i]), priors[i]});
    return out;
  }

  void save(nn::Checkpoint& ck, const std::string& prefix = "policy") const {
    ck.put(prefix + ".meta", meta());
    ck.put(prefix + ".task_embedding", task_table_);
    ck.put_mlp(prefix + ".denoiser", net_);
  }

  static DiffusionPolicy load(const nn::Checkpoint& ck, const std::string& prefix = "policy") {
    const Matrix& m = ck.get(prefix + ".meta");
    DiffusionPolicy p;
    p.feature_dim_ = static_cast<int>(m(0, 0));
    p.horizon_ = static_cast<int>(m(0, 1));
    p.schedule_ = NoiseSchedule::linear(static_cast<int>(m(0, 2)), m(0, 3), m(0, 4));
    p.task_table_ = ck.get(prefix + ".task_embedding");
    p.net_ = ck.get_mlp(prefix + ".denoiser");
    if (p.net_.input_dim() != p.input_dim() || p.net_.output_dim() != p.action_dim()) {
      throw IoError("policy checkpoint has inconsistent shapes");
    }
    return p;
  }

  static std::vector<double> candidate_priors(const std::vector<ActionChunk>& chunks, PriorMode mode) {
    const std::size_t k = chunks.size();
    std::vector<double> w(k, 1.0);
    if (mode == PriorMode::kDensity && k > 1) {
      std::vector<Vector> v;
      for (const auto& c : chunks) v.push_back(normalize_chunk(c));
      for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < k; ++j) {
          if (j != i) d.push_back((v[i] - v[j]).norm());
        }
        std::sort(d.begin(), d.end());
        const std::size_t m = std::min<std::size_t>(2, d.size());
        double mean = 0.0;
        for (std::size_t j = 0; j < m; ++j) mean += d[j];
        mean /= static_cast<double>(m);
        w[i] = 1.0 / (1e-3 + mean);
      }
    }
    double total = 0.0;
    for (double x : w) total += x;
    for (double& x : w) x /= total;
    return w;
  }

 private:
  Matrix meta() const {
    Matrix m(1, 5);
    m << feature_dim_, horizon_, schedule_.steps, schedule_.beta[1], schedule_.beta[schedule_.steps];
    return m;
  }

  Matrix assemble_input(const Matrix& xt, std::span<const int> t, const Matrix& features,
                        std::span<const int> tasks) const {
    const Eigen::Index n = xt.cols();
    if (xt.rows() != action_dim() || features.rows() != feature_dim_ || features.cols() != n ||
        static_cast<Eigen::Index>(t.size()) != n || static_cast<Eigen::Index>(tasks.size()) != n) {
      throw ShapeError("diffusion policy: inconsistent batch shapes");
    }
    Matrix in(input_dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int task = tasks[static_cast<std::size_t>(j)];
      if (task < 0 || task >= task_table_.cols()) throw ShapeError("task id out of range");
      in.block(0, j, action_dim(), 1) = xt.col(j);
      Vector te(kTimeEmbedDim);
      time_embedding(t[static_cast<std::size_t>(j)], te);
      in.block(action_dim(), j, kTimeEmbedDim, 1) = te;
      in.block(action_dim() + kTimeEmbedDim, j, feature_dim_, 1) = features.col(j);
      in.block(action_dim() + kTimeEmbedDim + feature_dim_, j, kTaskEmbedDim, 1) = task_table_.col(task);
    }
    return in;
  }

  void pack_batch(std::span<const Demonstration* const> batch, Matrix& x0, Matrix& feats,
                  std::vector<int>& tasks) const {
    const auto n = static_cast<Eigen::Index>(batch.size());
    x0.resize(action_dim(), n);
    feats.resize(feature_dim_, n);
    tasks.resize(batch.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      const Demonstration& d = *batch[static_cast<std::size_t>(j)];
      if (d.chunk.horizon() != horizon_) throw ShapeError("demonstration chunk length differs from policy horizon");
      x0.col(j) = normalize_chunk(d.chunk);
      const auto f = d.obs.features();
      feats.col(j) = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
      tasks[static_cast<std::size_t>(j)] = d.obs.task_id;
    }
  }

  Matrix sample_normalized(const Observation& obs, int n, Rng& rng) const {
    const auto f = obs.features();
    if (static_cast<int>(f.size()) != feature_dim_) throw ShapeError("observation feature length differs from policy");
    Matrix feats(feature_dim_, n);
    for (int j = 0; j < n; ++j) feats.col(j) = Eigen::Map<const Vector>(f.data(), feature_dim_);
    std::vector<int> tasks(static_cast<std::size_t>(n), obs.task_id);
    Matrix x(action_dim(), n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < action_dim(); ++i) x(i, j) = rng.normal();
    }
    std::vector<int> t(static_cast<std::size_t>(n));
    for (int step = schedule_.steps; step >= 1; --step) {
      std::fill(t.begin(), t.end(), step);
      const Matrix eps = predict_noise(x, t, feats, tasks);
      const double ab = schedule_.alpha_bar[step];
      Matrix x0 = ((x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
      if (step == 1) {
        x = std::move(x0);
        break;
      }
      Matrix mean = schedule_.posterior_coef_x0(step) * x0 + schedule_.posterior_coef_xt(step) * x;
      const double sd = std::sqrt(schedule_.posterior_variance(step));
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < action_dim(); ++i) mean(i, j) += sd * rng.normal();
      }
      x = std::move(mean);
    }
    return x;
  }

  NoiseSchedule schedule_;
  int feature_dim_ = 0;
  int horizon_ = 0;
  nn::Mlp net_;
  Matrix task_table_;
};

// Executes one policy sample without lookahead.
inline ActionChunk reactive_policy(const DiffusionPolicy& policy, const Observation& obs, Rng& rng) {
  return policy.sample(obs, rng);
}

}  // namespace storm::policy
