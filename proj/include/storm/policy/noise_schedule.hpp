#pragma once

#include <cmath>
#include <vector>

#include "storm/core/error.hpp"

namespace storm::policy {

// DDPM variance schedule, 1-indexed: beta[t] for t in [1, T], alpha_bar[0] = 1.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  // Betas spaced linearly from beta_first (t = 1) to beta_last (t = T).
  static NoiseSchedule linear(int steps, double beta_first, double beta_last) {
    if (steps < 1) throw ValidationError("noise schedule needs at least one step");
    if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0)) {
      throw ValidationError("noise schedule betas must satisfy 0 < first <= last < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta.assign(steps + 1, 0.0);
    s.alpha.assign(steps + 1, 1.0);
    s.alpha_bar.assign(steps + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
      s.beta[t] = beta_first + frac * (beta_last - beta_first);
      s.alpha[t] = 1.0 - s.beta[t];
      s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
  }

  void check_step(int t) const {
    if (t < 1 || t > steps) throw ValidationError("diffusion step " + std::to_string(t) + " outside [1, T]");
  }

  // Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const {
    return beta[t] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
  }
  double posterior_coef_x0(int t) const {
    return beta[t] * std::sqrt(alpha_bar[t - 1]) / (1.0 - alpha_bar[t]);
  }
  double posterior_coef_xt(int t) const {
    return (1.0 - alpha_bar[t - 1]) * std::sqrt(alpha[t]) / (1.0 - alpha_bar[t]);
  }
};

// sqrt(abar) * x0 + sqrt(1 - abar) * eps, elementwise, for an explicit abar.
template <class Vec>
Vec forward_noise_abar(const Vec& x0, double alpha_bar, const Vec& eps) {
  return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * eps;
}

template <class Vec>
Vec forward_noise(const NoiseSchedule& s, const Vec& x0, int t, const Vec& eps) {
  s.check_step(t);
  return forward_noise_abar(x0, s.alpha_bar[t], eps);
}

}  // namespace storm::policy
