#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "storm/core/error.hpp"
#include "storm/env/tabletop.hpp"

namespace storm::env {

inline constexpr int kFrameSize = 16;

// Grayscale raster, row-major, row 0 at the top (y = 1).
struct Frame {
  int width = kFrameSize;
  int height = kFrameSize;
  std::vector<double> pixels = std::vector<double>(kFrameSize * kFrameSize, 0.0);

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row * width + col)]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row * width + col)]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

inline constexpr double kRingIntensity = 0.25;
inline constexpr double kObjectIntensity = 0.5;
inline constexpr double kGripperIntensity = 1.0;

// Layers, later ones on top: target ring, object discs, gripper cell. Discs
// and the ring are widened by half a pixel so every shape covers a pixel.
inline Frame render(const WorldState& s) {
  Frame f;
  const double half = 0.5 / kFrameSize;
  for (int r = 0; r < kFrameSize; ++r) {
    for (int c = 0; c < kFrameSize; ++c) {
      const Vec2 p{(c + 0.5) / kFrameSize, 1.0 - (r + 0.5) / kFrameSize};
      double v = 0.0;
      if (std::abs(distance(p, s.target) - s.target_radius) <= half) v = kRingIntensity;
      for (const auto& o : s.objects) {
        if (distance(p, o) <= kObjectRadius + half) v = kObjectIntensity;
      }
      f.at(r, c) = v;
    }
  }
  const int col = std::clamp(static_cast<int>(s.gripper.x * kFrameSize), 0, kFrameSize - 1);
  const int row = std::clamp(static_cast<int>((1.0 - s.gripper.y) * kFrameSize), 0, kFrameSize - 1);
  f.at(row, col) = kGripperIntensity;
  return f;
}

// Binary PGM (P5), maxval 255.
inline std::string to_pgm(const Frame& f) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  for (double v : f.pixels) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  return out;
}

inline void write_pgm(const Frame& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string bytes = to_pgm(f);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace storm::env
