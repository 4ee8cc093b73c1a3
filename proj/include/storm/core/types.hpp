#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "storm/core/error.hpp"

namespace storm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;

  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 clamp_unit(Vec2 p) { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

inline constexpr double kMaxDisplacement = 0.1;
inline constexpr int kActionDims = 3;

// One sub-action: planar displacement plus gripper command (g < 0 closes).
struct ActionStep {
  double dx = 0.0;
  double dy = 0.0;
  double g = 0.0;

  friend bool operator==(const ActionStep&, const ActionStep&) = default;
};

inline ActionStep clamp_action(ActionStep a) {
  return {std::clamp(a.dx, -kMaxDisplacement, kMaxDisplacement),
          std::clamp(a.dy, -kMaxDisplacement, kMaxDisplacement), std::clamp(a.g, -1.0, 1.0)};
}

// Fixed-length sequence of sub-actions; values are clamped on construction.
class ActionChunk {
 public:
  ActionChunk() = default;

  explicit ActionChunk(std::vector<ActionStep> steps) : steps_(std::move(steps)) {
    if (steps_.empty()) throw ShapeError("action chunk needs at least one step");
    for (auto& s : steps_) s = clamp_action(s);
  }

  // Inverse of flatten(); `flat` holds H consecutive (dx, dy, g) triples.
  static ActionChunk from_flat(std::span<const double> flat) {
    if (flat.empty() || flat.size() % kActionDims != 0) {
      throw ShapeError("flat action length must be a positive multiple of 3");
    }
    std::vector<ActionStep> steps(flat.size() / kActionDims);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      steps[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
    }
    return ActionChunk(std::move(steps));
  }

  int horizon() const { return static_cast<int>(steps_.size()); }
  const std::vector<ActionStep>& steps() const { return steps_; }
  const ActionStep& operator[](std::size_t i) const { return steps_[i]; }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(steps_.size() * kActionDims);
    for (const auto& s : steps_) {
      out.push_back(s.dx);
      out.push_back(s.dy);
      out.push_back(s.g);
    }
    return out;
  }

  double linf_distance(const ActionChunk& other) const {
    double d = 0.0;
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      d = std::max({d, std::abs(steps_[i].dx - other.steps_[i].dx),
                    std::abs(steps_[i].dy - other.steps_[i].dy),
                    std::abs(steps_[i].g - other.steps_[i].g)});
    }
    return d;
  }

  friend bool operator==(const ActionChunk&, const ActionChunk&) = default;

 private:
  std::vector<ActionStep> steps_;
};

// Flat environment observation. Layout of features():
//   [gripper_x, gripper_y, holding, obj0_x, obj0_y, ..., target_x, target_y]
// flatten() appends task_id as a trailing element.
struct Observation {
  Vec2 gripper;
  int holding = 0;
  std::vector<Vec2> objects;
  Vec2 target;
  int task_id = 0;

  static int feature_dim(int n_objects) { return 5 + 2 * n_objects; }
  int feature_dim() const { return feature_dim(static_cast<int>(objects.size())); }

  std::vector<double> features() const {
    std::vector<double> f;
    f.reserve(feature_dim());
    f.push_back(gripper.x);
    f.push_back(gripper.y);
    f.push_back(static_cast<double>(holding));
    for (const auto& o : objects) {
      f.push_back(o.x);
      f.push_back(o.y);
    }
    f.push_back(target.x);
    f.push_back(target.y);
    return f;
  }

  std::vector<double> flatten() const {
    auto f = features();
    f.push_back(static_cast<double>(task_id));
    return f;
  }

  static Observation from_features(std::span<const double> f, int task_id) {
    if (f.size() < 7 || (f.size() - 5) % 2 != 0) throw ShapeError("bad observation feature length");
    Observation o;
    o.gripper = {f[0], f[1]};
    o.holding = f[2] >= 0.5 ? 1 : 0;
    const std::size_t n = (f.size() - 5) / 2;
    o.objects.resize(n);
    for (std::size_t i = 0; i < n; ++i) o.objects[i] = {f[3 + 2 * i], f[4 + 2 * i]};
    o.target = {f[f.size() - 2], f[f.size() - 1]};
    o.task_id = task_id;
    return o;
  }

  static Observation from_flat(std::span<const double> flat) {
    if (flat.empty()) throw ShapeError("empty observation");
    return from_features(flat.first(flat.size() - 1), static_cast<int>(std::lround(flat.back())));
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

}  // namespace storm
