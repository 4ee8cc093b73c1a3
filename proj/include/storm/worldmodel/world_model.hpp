#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "storm/core/config.hpp"
#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"
#include "storm/core/types.hpp"
#include "storm/nn/checkpoint.hpp"
#include "storm/nn/mlp.hpp"
#include "storm/nn/optimizer.hpp"
#include "storm/policy/diffusion_policy.hpp"
#include "storm/worldmodel/codebook.hpp"
#include "storm/worldmodel/transitions.hpp"

namespace storm::worldmodel {

using nn::Matrix;
using nn::Vector;

inline constexpr int kNumTaskSlots = 3;

// Transitions in token form, one column (or entry) per sample.
struct EncodedBatch {
  std::vector<std::vector<int>> prev;
  std::vector<std::vector<int>> next;
  Matrix actions;  // normalized chunks, 3H x n
  std::vector<int> tasks;
  Vector rewards;

  int size() const { return static_cast<int>(prev.size()); }

  EncodedBatch subset(std::span<const int> idx) const {
    EncodedBatch b;
    b.actions.resize(actions.rows(), static_cast<Eigen::Index>(idx.size()));
    b.rewards.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto i = static_cast<std::size_t>(idx[j]);
      b.prev.push_back(prev[i]);
      b.next.push_back(next[i]);
      b.tasks.push_back(tasks[i]);
      b.actions.col(static_cast<Eigen::Index>(j)) = actions.col(static_cast<Eigen::Index>(i));
      b.rewards[static_cast<Eigen::Index>(j)] = rewards[static_cast<Eigen::Index>(i)];
    }
    return b;
  }
};

inline EncodedBatch encode_transitions(std::span<const Transition> ts, const Codebook& cb) {
  if (ts.empty()) throw ValidationError("no transitions to encode");
  EncodedBatch b;
  const int adim = static_cast<int>(ts.front().action.flatten().size());
  b.actions.resize(adim, static_cast<Eigen::Index>(ts.size()));
  b.rewards.resize(static_cast<Eigen::Index>(ts.size()));
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto f0 = ts[j].obs.features();
    const auto f1 = ts[j].next_obs.features();
    b.prev.push_back(encode(f0, cb));
    b.next.push_back(encode(f1, cb));
    b.tasks.push_back(ts[j].obs.task_id);
    const Vector a = policy::normalize_chunk(ts[j].action);
    if (a.size() != adim) throw ShapeError("transitions mix chunk lengths");
    b.actions.col(static_cast<Eigen::Index>(j)) = a;
    b.rewards[static_cast<Eigen::Index>(j)] = ts[j].reward;
  }
  return b;
}

struct WorldModelLosses {
  double video = 0.0;
  double reward = 0.0;
  double total = 0.0;
};

struct RolloutResult {
  Observation next_obs;
  double reward = 0.0;
  std::vector<int> tokens;
};

// Token dynamics and reward prediction over a quantized observation.
//
// A trunk MLP reads [embeddings of the previous frame's tokens, normalized
// action chunk, task embedding] and produces a latent h. Token j of the next
// frame is predicted by its own head from [h, embeddings of next-frame tokens
// 0..j-1]; the reward head reads h alone. Token and task embedding tables and
// the trunk are shared by both objectives.
class WorldModel {
 public:
  WorldModel() = default;

  WorldModel(Codebook cb, int horizon, int embed_dim, const std::vector<int>& trunk_hidden, int latent_dim,
             int head_hidden, Rng& init)
      : codebook_(std::move(cb)), horizon_(horizon), embed_dim_(embed_dim) {
    if (codebook_.dims() < 1) throw ValidationError("world model needs a fitted codebook");
    token_table_ = random_table(embed_dim_, dims() * codes(), init);
    task_table_ = random_table(embed_dim_, kNumTaskSlots, init);
    std::vector<int> td{trunk_input_dim()};
    td.insert(td.end(), trunk_hidden.begin(), trunk_hidden.end());
    td.push_back(latent_dim);
    trunk_ = nn::Mlp(td, init);
    for (int j = 0; j < dims(); ++j) heads_.emplace_back(std::vector<int>{latent_dim + j * embed_dim_, head_hidden, codes()}, init);
    reward_ = nn::Mlp({latent_dim, head_hidden, 1}, init);
  }

  static WorldModel from_config(Codebook cb, const Config& c, Rng& init) {
    return WorldModel(std::move(cb), c.chunk_h, c.wm_embed_dim, c.wm_trunk_hidden, c.wm_latent_dim, c.wm_head_hidden,
                      init);
  }

  const Codebook& codebook() const { return codebook_; }
  int dims() const { return codebook_.dims(); }
  int codes() const { return codebook_.size; }
  int horizon() const { return horizon_; }
  int action_dim() const { return 3 * horizon_; }
  int latent_dim() const { return trunk_.output_dim(); }
  int trunk_input_dim() const { return dims() * embed_dim_ + action_dim() + embed_dim_; }

  std::vector<nn::ParamRef> params() {
    std::vector<nn::ParamRef> out{{"token_embedding", &token_table_}, {"task_embedding", &task_table_}};
    trunk_.append_params("trunk.", out);
    for (int j = 0; j < dims(); ++j) heads_[j].append_params("dynamics" + std::to_string(j) + ".", out);
    reward_.append_params("reward.", out);
    return out;
  }

  // Teacher-forced losses on a batch. L_video is the token cross-entropy
  // averaged over samples and positions, L_reward the mean squared reward
  // error; total = L_video + lambda * L_reward. Gradients of total are
  // accumulated into `grads` (aligned with params()) when given.
  WorldModelLosses losses(const EncodedBatch& b, double lambda, nn::Grads* grads = nullptr) const {
    const Eigen::Index n = b.size();
    if (n == 0) throw ValidationError("empty world-model batch");
    nn::MlpTape trunk_tape;
    const Matrix h = trunk_.forward(trunk_input(b.prev, b.actions, b.tasks), grads ? &trunk_tape : nullptr);
    Matrix dh = Matrix::Zero(h.rows(), n);
    const double scale = 1.0 / (static_cast<double>(n) * dims());
    std::size_t g = 2 + 2 * static_cast<std::size_t>(trunk_.num_layers());

    WorldModelLosses out;
    for (int j = 0; j < dims(); ++j) {
      nn::MlpTape tape;
      const Matrix logits = heads_[j].forward(head_input(h, b.next, j), grads ? &tape : nullptr);
      Matrix p = softmax(logits);
      for (Eigen::Index c = 0; c < n; ++c) {
        const int y = b.next[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
        out.video -= std::log(std::max(p(y, c), 1e-300));
        p(y, c) -= 1.0;
      }
      if (grads) {
        const Matrix din = heads_[j].backward(tape, p * scale, std::span<Matrix>(*grads).subspan(g));
        dh += din.topRows(latent_dim());
        for (Eigen::Index c = 0; c < n; ++c) {
          for (int i = 0; i < j; ++i) {
            const int tok = b.next[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
            (*grads)[0].col(i * codes() + tok) += din.block(latent_dim() + i * embed_dim_, c, embed_dim_, 1);
          }
        }
      }
      g += 2 * static_cast<std::size_t>(heads_[j].num_layers());
    }
    out.video *= scale;

    nn::MlpTape rtape;
    const Matrix rhat = reward_.forward(h, grads ? &rtape : nullptr);
    const Matrix diff = rhat - b.rewards.transpose();
    out.reward = diff.squaredNorm() / static_cast<double>(n);
    out.total = out.video + lambda * out.reward;
    if (!std::isfinite(out.total)) throw TrainingError("non-finite world-model loss");

    if (grads) {
      const Matrix up = (2.0 * lambda / static_cast<double>(n)) * diff;
      dh += reward_.backward(rtape, up, std::span<Matrix>(*grads).subspan(g));
      const Matrix din = trunk_.backward(trunk_tape, dh, std::span<Matrix>(*grads).subspan(2));
      const Eigen::Index task_off = dims() * embed_dim_ + action_dim();
      for (Eigen::Index c = 0; c < n; ++c) {
        for (int d = 0; d < dims(); ++d) {
          const int tok = b.prev[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
          (*grads)[0].col(d * codes() + tok) += din.block(d * embed_dim_, c, embed_dim_, 1);
        }
        (*grads)[1].col(b.tasks[static_cast<std::size_t>(c)]) += din.block(task_off, c, embed_dim_, 1);
      }
    }
    return out;
  }

  WorldModelLosses hybrid_train_step(const EncodedBatch& b, double lambda, nn::OptimizerState& opt,
                                     double lr_scale = 1.0) {
    auto ps = params();
    nn::Grads grads = nn::zeros_like(ps);
    const WorldModelLosses l = losses(b, lambda, &grads);
    nn::optimizer_step(opt, ps, grads, lr_scale);
    return l;
  }

  // Fraction of next-frame tokens whose argmax under teacher forcing is correct.
  double token_accuracy(const EncodedBatch& b) const {
    const Matrix h = trunk_.forward(trunk_input(b.prev, b.actions, b.tasks));
    long hits = 0;
    for (int j = 0; j < dims(); ++j) {
      const Matrix logits = heads_[j].forward(head_input(h, b.next, j));
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        hits += argmax(logits.col(c)) == b.next[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      }
    }
    return static_cast<double>(hits) / (static_cast<double>(b.size()) * dims());
  }

  Vector predict_rewards(const EncodedBatch& b) const {
    return reward_.forward(trunk_.forward(trunk_input(b.prev, b.actions, b.tasks))).row(0).transpose();
  }

  // Logits for token j given the previous frame and the current frame's
  // tokens; entries of `frame` at positions >= j are never read.
  Vector position_logits(std::span<const int> prev, const ActionChunk& action, int task, std::span<const int> frame,
                         int j) const {
    const Vector h = latent(prev, action, task);
    return heads_[static_cast<std::size_t>(j)].forward(head_input_single(h, frame, j));
  }

  // One-step prediction from an observation. Greedy decoding takes the argmax
  // token (ties to the lower index); otherwise tokens are sampled from the
  // softmax using `rng`.
  RolloutResult rollout(const Observation& obs, const ActionChunk& action, Rng* rng = nullptr,
                        bool greedy = true) const {
    if (!greedy && rng == nullptr) throw UsageError("stochastic rollout needs an rng");
    const auto prev = encode(obs.features(), codebook_);
    const Vector h = latent(prev, action, obs.task_id);
    RolloutResult out;
    out.tokens.assign(static_cast<std::size_t>(dims()), 0);
    for (int j = 0; j < dims(); ++j) {
      const Vector logits = heads_[static_cast<std::size_t>(j)].forward(head_input_single(h, out.tokens, j));
      out.tokens[static_cast<std::size_t>(j)] = greedy ? argmax(logits) : sample_index(logits, *rng);
    }
    auto f = decode(out.tokens, codebook_);
    for (double& x : f) x = std::clamp(x, 0.0, 1.0);
    out.next_obs = Observation::from_features(f, obs.task_id);
    out.reward = reward_.forward(h)[0];
    return out;
  }

  void save(nn::Checkpoint& ck, const std::string& prefix = "wm") const {
    Matrix meta(1, 5);
    meta << dims(), codes(), horizon_, embed_dim_, codebook_.beta;
    ck.put(prefix + ".meta", meta);
    Matrix cb(dims(), codes());
    for (int d = 0; d < dims(); ++d) {
      for (int k = 0; k < codes(); ++k) cb(d, k) = codebook_.codes[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)];
    }
    ck.put(prefix + ".codebook", cb);
    ck.put(prefix + ".token_embedding", token_table_);
    ck.put(prefix + ".task_embedding", task_table_);
    ck.put_mlp(prefix + ".trunk", trunk_);
    for (int j = 0; j < dims(); ++j) ck.put_mlp(prefix + ".dynamics" + std::to_string(j), heads_[j]);
    ck.put_mlp(prefix + ".reward", reward_);
  }

  static WorldModel load(const nn::Checkpoint& ck, const std::string& prefix = "wm") {
    const Matrix& meta = ck.get(prefix + ".meta");
    WorldModel m;
    const int d = static_cast<int>(meta(0, 0));
    m.codebook_.size = static_cast<int>(meta(0, 1));
    m.horizon_ = static_cast<int>(meta(0, 2));
    m.embed_dim_ = static_cast<int>(meta(0, 3));
    m.codebook_.beta = meta(0, 4);
    const Matrix& cb = ck.get(prefix + ".codebook");
    if (cb.rows() != d || cb.cols() != m.codebook_.size) throw IoError("world-model codebook has the wrong shape");
    m.codebook_.codes.assign(static_cast<std::size_t>(d), {});
    for (int r = 0; r < d; ++r) {
      for (int k = 0; k < m.codebook_.size; ++k) m.codebook_.codes[static_cast<std::size_t>(r)].push_back(cb(r, k));
    }
    m.token_table_ = ck.get(prefix + ".token_embedding");
    m.task_table_ = ck.get(prefix + ".task_embedding");
    m.trunk_ = ck.get_mlp(prefix + ".trunk");
    for (int j = 0; j < d; ++j) m.heads_.push_back(ck.get_mlp(prefix + ".dynamics" + std::to_string(j)));
    m.reward_ = ck.get_mlp(prefix + ".reward");
    if (m.trunk_.input_dim() != m.trunk_input_dim()) throw IoError("world-model checkpoint has inconsistent shapes");
    return m;
  }

  static int argmax(const Eigen::Ref<const Vector>& v) {
    int best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (v[i] > v[best]) best = static_cast<int>(i);
    }
    return best;
  }

 private:
  static Matrix random_table(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-1.0, 1.0);
    }
    return m;
  }

  static Matrix softmax(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      p.col(c).array() -= p.col(c).maxCoeff();
      p.col(c) = p.col(c).array().exp().matrix();
      p.col(c) /= p.col(c).sum();
    }
    return p;
  }

  static int sample_index(const Vector& logits, Rng& rng) {
    Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    p /= p.sum();
    double u = rng.uniform();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      u -= p[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(p.size() - 1);
  }

  void check_task(int task) const {
    if (task < 0 || task >= task_table_.cols()) throw ShapeError("task id out of range");
  }

  Matrix trunk_input(const std::vector<std::vector<int>>& prev, const Matrix& actions,
                     const std::vector<int>& tasks) const {
    const auto n = static_cast<Eigen::Index>(prev.size());
    if (actions.rows() != action_dim() || actions.cols() != n) throw ShapeError("world model: action batch shape");
    Matrix in(trunk_input_dim(), n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto& toks = prev[static_cast<std::size_t>(c)];
      if (static_cast<int>(toks.size()) != dims()) throw ShapeError("world model: token frame length");
      for (int d = 0; d < dims(); ++d) in.block(d * embed_dim_, c, embed_dim_, 1) = token_table_.col(d * codes() + toks[d]);
      in.block(dims() * embed_dim_, c, action_dim(), 1) = actions.col(c);
      const int task = tasks[static_cast<std::size_t>(c)];
      check_task(task);
      in.block(dims() * embed_dim_ + action_dim(), c, embed_dim_, 1) = task_table_.col(task);
    }
    return in;
  }

  Matrix head_input(const Matrix& h, const std::vector<std::vector<int>>& frames, int j) const {
    Matrix in(latent_dim() + j * embed_dim_, h.cols());
    in.topRows(latent_dim()) = h;
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      for (int i = 0; i < j; ++i) {
        in.block(latent_dim() + i * embed_dim_, c, embed_dim_, 1) =
            token_table_.col(i * codes() + frames[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]);
      }
    }
    return in;
  }

  Vector head_input_single(const Vector& h, std::span<const int> frame, int j) const {
    Vector in(latent_dim() + j * embed_dim_);
    in.head(latent_dim()) = h;
    for (int i = 0; i < j; ++i) in.segment(latent_dim() + i * embed_dim_, embed_dim_) = token_table_.col(i * codes() + frame[i]);
    return in;
  }

  Vector latent(std::span<const int> prev, const ActionChunk& action, int task) const {
    if (static_cast<int>(prev.size()) != dims()) throw ShapeError("world model: token frame length");
    const Vector a = policy::normalize_chunk(action);
    if (a.size() != action_dim()) throw ShapeError("world model: action chunk length");
    check_task(task);
    Vector in(trunk_input_dim());
    for (int d = 0; d < dims(); ++d) in.segment(d * embed_dim_, embed_dim_) = token_table_.col(d * codes() + prev[d]);
    in.segment(dims() * embed_dim_, action_dim()) = a;
    in.segment(dims() * embed_dim_ + action_dim(), embed_dim_) = task_table_.col(task);
    return trunk_.forward(in);
  }

  Codebook codebook_;
  int horizon_ = 0;
  int embed_dim_ = 0;
  Matrix token_table_;
  Matrix task_table_;
  nn::Mlp trunk_;
  std::vector<nn::Mlp> heads_;
  nn::Mlp reward_;
};

}  // namespace storm::worldmodel
