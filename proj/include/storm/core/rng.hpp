#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace storm {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Deterministic random stream keyed by (seed, label).
//
// The raw generator is std::mt19937_64, whose output sequence is fixed by the
// standard. Uniform and normal variates are derived here rather than through
// <random> distributions, whose algorithms are implementation-defined, so that
// every draw is reproducible across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label)
      : engine_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(label)))) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Child stream; consumes one draw from this stream.
  Rng fork(std::string_view label) { return Rng(next_u64(), label); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng rng_stream(std::uint64_t seed, std::string_view label) { return Rng(seed, label); }

}  // namespace storm
