#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "storm/core/error.hpp"
#include "storm/core/rng.hpp"

namespace storm::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Named view of a trainable tensor owned elsewhere.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

// Gradient buffers aligned index-for-index with a ParamRef list.
using Grads = std::vector<Matrix>;

inline Grads zeros_like(const std::vector<ParamRef>& params) {
  Grads g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  return g;
}

// Layer inputs recorded by a forward pass, consumed by backward().
struct MlpTape {
  std::vector<Matrix> inputs;
};

// Fully connected network. Hidden layers use tanh, the output layer is affine.
// Batched calls take one sample per column.
class Mlp {
 public:
  Mlp() = default;

  // Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<int> dims, Rng& rng) : Mlp(zeros(std::move(dims))) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) weights_[l](r, c) = rng.uniform(-bound, bound);
      }
      for (Eigen::Index r = 0; r < biases_[l].rows(); ++r) biases_[l](r, 0) = rng.uniform(-bound, bound);
    }
  }

  static Mlp zeros(std::vector<int> dims) {
    if (dims.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
    for (int d : dims) {
      if (d < 1) throw ShapeError("MLP layer dims must be positive");
    }
    Mlp m;
    m.dims_ = std::move(dims);
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
      m.weights_.push_back(Matrix::Zero(m.dims_[l + 1], m.dims_[l]));
      m.biases_.push_back(Matrix::Zero(m.dims_[l + 1], 1));
    }
    return m;
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }

  Matrix& weight(int l) { return weights_[l]; }
  const Matrix& weight(int l) const { return weights_[l]; }
  Matrix& bias(int l) { return biases_[l]; }
  const Matrix& bias(int l) const { return biases_[l]; }

  Vector forward(const Vector& x) const {
    Matrix X = x;
    return forward(X).col(0);
  }

  Matrix forward(const Matrix& X, MlpTape* tape = nullptr) const {
    if (X.rows() != input_dim()) {
      throw ShapeError("MLP input has " + std::to_string(X.rows()) + " rows, expected " +
                       std::to_string(input_dim()));
    }
    if (tape) tape->inputs.clear();
    Matrix a = X;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l].col(0);
      if (l + 1 < weights_.size()) z = z.array().tanh().matrix();
      if (tape) tape->inputs.push_back(std::move(a));
      a = std::move(z);
    }
    return a;
  }

  // Accumulates d(sum upstream . output)/d(params) into grads[0 .. 2L) in the
  // order of append_params(), and returns the gradient with respect to the input.
  Matrix backward(const MlpTape& tape, const Matrix& upstream, std::span<Matrix> grads) const {
    if (upstream.rows() != output_dim() || tape.inputs.size() != weights_.size() ||
        upstream.cols() != tape.inputs.front().cols()) {
      throw ShapeError("MLP backward: upstream gradient does not match the recorded forward pass");
    }
    if (grads.size() < 2 * weights_.size()) throw ShapeError("MLP backward: too few gradient buffers");
    Matrix delta = upstream;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const Matrix& in = tape.inputs[l];
      grads[2 * l].noalias() += delta * in.transpose();
      grads[2 * l + 1].noalias() += delta.rowwise().sum();
      Matrix back = weights_[l].transpose() * delta;
      if (l > 0) back.array() *= (1.0 - in.array().square());
      delta = std::move(back);
    }
    return delta;
  }

  void append_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back({prefix + "layer" + std::to_string(l) + ".weight", &weights_[l]});
      out.push_back({prefix + "layer" + std::to_string(l) + ".bias", &biases_[l]});
    }
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    append_params("", out);
    return out;
  }

  Grads zero_grads() const {
    Grads g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      g.push_back(Matrix::Zero(biases_[l].rows(), 1));
    }
    return g;
  }

 private:
  std::vector<int> dims_;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
};

struct MlpGradients {
  Grads params;
  Vector input;
};

// Gradients of upstream . forward(net, x) for a single input vector.
inline MlpGradients backward(const Mlp& net, const Vector& x, const Vector& upstream) {
  MlpTape tape;
  Matrix X = x;
  net.forward(X, &tape);
  MlpGradients out{net.zero_grads(), Vector()};
  Matrix U = upstream;
  out.input = net.backward(tape, U, out.params).col(0);
  return out;
}

}  // namespace storm::nn
