#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "storm/core/rng.hpp"
#include "storm/nn/mlp.hpp"

namespace storm::nn {

// Compares analytic gradients with central finite differences.
//
// For each parameter tensor up to `max_coords` coordinates are probed (all of
// them when the tensor is small enough). The reported error for a tensor is
// ||analytic - numeric|| / max(||analytic||, ||numeric||) over the probed
// coordinates; the function returns the maximum over tensors. Tensors whose
// probed gradients are both below `abs_floor` in norm count as exact.
template <class LossFn>
double max_relative_error(LossFn&& loss, const std::vector<ParamRef>& params, const Grads& analytic, Rng& rng,
                          int max_coords = 24, double h = 1e-5, double abs_floor = 1e-9) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    const Eigen::Index n = p.size();
    std::vector<Eigen::Index> coords;
    if (n <= max_coords) {
      for (Eigen::Index k = 0; k < n; ++k) coords.push_back(k);
    } else {
      for (int k = 0; k < max_coords; ++k) coords.push_back(static_cast<Eigen::Index>(rng.uniform() * n));
    }
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (Eigen::Index k : coords) {
      double& x = p.data()[k];
      const double saved = x;
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data()[k];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a_sq, n_sq));
    if (scale < abs_floor) continue;
    worst = std::max(worst, std::sqrt(diff_sq) / scale);
  }
  return worst;
}

// Same comparison for the gradient with respect to an input vector.
template <class LossFn>
double input_relative_error(LossFn&& loss, Vector& x, const Vector& analytic, double h = 1e-5,
                            double abs_floor = 1e-9) {
  double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = loss();
    x[k] = saved - h;
    const double down = loss();
    x[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    diff_sq += (analytic[k] - numeric) * (analytic[k] - numeric);
    a_sq += analytic[k] * analytic[k];
    n_sq += numeric * numeric;
  }
  const double scale = std::sqrt(std::max(a_sq, n_sq));
  return scale < abs_floor ? 0.0 : std::sqrt(diff_sq) / scale;
}

}  // namespace storm::nn
