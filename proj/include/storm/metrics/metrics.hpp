#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "storm/core/error.hpp"
#include "storm/core/trajectory.hpp"
#include "storm/core/types.hpp"
#include "storm/env/render.hpp"

namespace storm::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SuccessRate {
  double rate = 0.0;
  int successes = 0;
  int count = 0;
  double stderr_ = 0.0;  // binomial standard error
};

inline SuccessRate success_rate(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw UsageError("success_rate of an empty set");
  SuccessRate r;
  r.count = static_cast<int>(trajectories.size());
  for (const auto& t : trajectories) r.successes += t.succeeded() ? 1 : 0;
  r.rate = static_cast<double>(r.successes) / r.count;
  r.stderr_ = std::sqrt(r.rate * (1.0 - r.rate) / r.count);
  return r;
}

struct GaussianSummary {
  Vector mean;
  Matrix cov;
};

// Sample mean and (n - 1)-denominator covariance, symmetrized.
inline GaussianSummary summarize(std::span<const std::vector<double>> samples) {
  if (samples.empty()) throw ValidationError("summarize needs samples");
  const auto d = static_cast<Eigen::Index>(samples.front().size());
  if (static_cast<Eigen::Index>(samples.size()) < d + 1) {
    throw ValidationError("summarize needs at least d + 1 = " + std::to_string(d + 1) + " samples, got " +
                          std::to_string(samples.size()));
  }
  Matrix x(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (static_cast<Eigen::Index>(samples[j].size()) != d) throw ShapeError("summarize: samples differ in length");
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vector>(samples[j].data(), d);
  }
  GaussianSummary g;
  g.mean = x.rowwise().mean();
  const Matrix c = x.colwise() - g.mean;
  g.cov = c * c.transpose() / static_cast<double>(x.cols() - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

// Square root of a symmetric PSD matrix; eigenvalues below zero are clamped.
inline Matrix sqrt_psd(const Matrix& a) {
  const Matrix s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw ValidationError("eigendecomposition failed");
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Squared Frechet distance between Gaussians:
//   |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
inline double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() || b.cov.rows() != b.mean.size()) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  const Matrix ra = sqrt_psd(a.cov);
  const Matrix cross = sqrt_psd(ra * b.cov * ra);
  const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return std::max(0.0, d2);
}

inline constexpr double kPsnrIdentical = 100.0;

inline void check_frames(const env::Frame& a, const env::Frame& b) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    throw ShapeError("frame dimensions differ");
  }
}

// Data range 1; identical frames report kPsnrIdentical.
inline double psnr(const env::Frame& a, const env::Frame& b) {
  check_frames(a, b);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) mse += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrIdentical;
  return std::min(kPsnrIdentical, 10.0 * std::log10(1.0 / mse));
}

// Mean SSIM over square windows (population statistics inside a window).
inline double ssim(const env::Frame& a, const env::Frame& b, int window = 8, int stride = 4) {
  check_frames(a, b);
  if (window < 1 || stride < 1 || window > a.width || window > a.height) throw ValidationError("bad SSIM window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  const double n = static_cast<double>(window) * window;
  for (int r0 = 0; r0 + window <= a.height; r0 += stride) {
    for (int q0 = 0; q0 + window <= a.width; q0 += stride) {
      double mx = 0.0, my = 0.0;
      for (int r = r0; r < r0 + window; ++r) {
        for (int q = q0; q < q0 + window; ++q) {
          mx += a.at(r, q);
          my += b.at(r, q);
        }
      }
      mx /= n;
      my /= n;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int r = r0; r < r0 + window; ++r) {
        for (int q = q0; q < q0 + window; ++q) {
          const double dx = a.at(r, q) - mx;
          const double dy = b.at(r, q) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      }
      vx /= n;
      vy /= n;
      cxy /= n;
      total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

inline constexpr int kTrajWindow = 4;

// Concatenated feature vectors of every run of `window` consecutive observations.
inline std::vector<std::vector<double>> window_features(std::span<const Observation> seq, int window = kTrajWindow) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(window) <= seq.size(); ++i) {
    std::vector<double> f;
    for (int k = 0; k < window; ++k) {
      const auto o = seq[i + static_cast<std::size_t>(k)].features();
      f.insert(f.end(), o.begin(), o.end());
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace storm::metrics
