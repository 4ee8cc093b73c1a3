#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"

namespace storm::worldmodel {

// Per-dimension scalar codebook. Each dimension holds `size` codes sorted
// ascending; dimensions with fewer distinct training values than codes are
// padded by repeating their largest code (the tie rule in encode() never
// selects a padded entry).
struct Codebook {
  int size = 16;
  double beta = 0.25;
  std::vector<std::vector<double>> codes;

  int dims() const { return static_cast<int>(codes.size()); }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct CodebookFit {
  Codebook codebook;
  std::vector<std::string> warnings;
  std::vector<int> iterations;
};

namespace detail {

// Index of the nearest code; ties go to the lower index.
inline int nearest_code(const std::vector<double>& codes, double x) {
  int best = 0;
  double best_d = std::abs(x - codes[0]);
  for (std::size_t i = 1; i < codes.size(); ++i) {
    const double d = std::abs(x - codes[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace detail

// Fits each dimension by 1-D k-means (k = size), initialised at evenly spaced
// distinct values and iterated to an assignment fixed point or `max_iter`.
// `rows` holds one observation per entry, all of equal length.
inline CodebookFit fit_codebook(std::span<const std::vector<double>> rows, int size, double beta, int max_iter = 100) {
  if (rows.empty()) throw ValidationError("fit_codebook needs a non-empty dataset");
  if (size < 2) throw ValidationError("codebook size must be >= 2");
  const std::size_t dims = rows.front().size();
  CodebookFit fit;
  fit.codebook.size = size;
  fit.codebook.beta = beta;
  for (std::size_t d = 0; d < dims; ++d) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (const auto& r : rows) {
      if (r.size() != dims) throw ShapeError("fit_codebook: rows differ in length");
      values.push_back(r[d]);
    }
    std::sort(values.begin(), values.end());
    std::vector<double> distinct = values;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> codes;
    int iters = 0;
    if (static_cast<int>(distinct.size()) <= size) {
      if (distinct.size() == 1) {
        fit.warnings.push_back("dimension " + std::to_string(d) + " is constant; codebook degenerates to one value");
      }
      codes = distinct;
    } else {
      const auto m = static_cast<double>(distinct.size());
      for (int i = 0; i < size; ++i) codes.push_back(distinct[static_cast<std::size_t>((i + 0.5) * m / size)]);
      std::vector<int> assign(values.size(), -1);
      for (iters = 1; iters <= max_iter; ++iters) {
        bool changed = false;
        std::vector<double> sum(codes.size(), 0.0);
        std::vector<int> count(codes.size(), 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
          const int a = detail::nearest_code(codes, values[i]);
          changed = changed || a != assign[i];
          assign[i] = a;
          sum[a] += values[i];
          ++count[a];
        }
        if (!changed) break;
        for (std::size_t c = 0; c < codes.size(); ++c) {
          if (count[c] > 0) codes[c] = sum[c] / count[c];
        }
      }
      std::sort(codes.begin(), codes.end());
    }
    while (static_cast<int>(codes.size()) < size) codes.push_back(codes.back());
    fit.codebook.codes.push_back(std::move(codes));
    fit.iterations.push_back(iters);
  }
  return fit;
}

inline std::vector<int> encode(std::span<const double> x, const Codebook& cb) {
  if (static_cast<int>(x.size()) != cb.dims()) throw ShapeError("encode: vector length differs from codebook");
  std::vector<int> tokens(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) tokens[d] = detail::nearest_code(cb.codes[d], x[d]);
  return tokens;
}

inline std::vector<double> decode(std::span<const int> tokens, const Codebook& cb) {
  if (static_cast<int>(tokens.size()) != cb.dims()) throw ShapeError("decode: token count differs from codebook");
  std::vector<double> x(tokens.size());
  for (std::size_t d = 0; d < tokens.size(); ++d) {
    if (tokens[d] < 0 || tokens[d] >= cb.size) throw ShapeError("decode: token out of range");
    x[d] = cb.codes[d][static_cast<std::size_t>(tokens[d])];
  }
  return x;
}

struct VqLoss {
  double loss = 0.0;
  std::vector<double> reconstruction;
};

// VQ objective with an identity encoder, z_e(x) = x:
//   |x - x_hat|^2 + |sg[x] - e|^2 + beta |x - sg[e]|^2 = (2 + beta) |x - x_hat|^2.
// The stop-gradient terms only matter for which side receives gradient; with
// a fixed encoder and non-trainable codes the value is diagnostic.
inline VqLoss vq_loss(std::span<const double> x, const Codebook& cb) {
  VqLoss out;
  out.reconstruction = decode(encode(x, cb), cb);
  double sq = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) sq += (x[d] - out.reconstruction[d]) * (x[d] - out.reconstruction[d]);
  const double recon = sq;
  const double codebook_term = sq;
  const double commitment = cb.beta * sq;
  out.loss = recon + codebook_term + commitment;
  return out;
}

// JSON file: {"size": B, "beta": b, "codes": [[...], ...]}.
inline nlohmann::json codebook_to_json(const Codebook& cb) {
  return {{"size", cb.size}, {"beta", cb.beta}, {"codes", cb.codes}};
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
  Codebook cb;
  cb.size = j.at("size").get<int>();
  cb.beta = j.at("beta").get<double>();
  cb.codes = j.at("codes").get<std::vector<std::vector<double>>>();
  for (const auto& c : cb.codes) {
    if (static_cast<int>(c.size()) != cb.size) throw IoError("codebook dimension has wrong number of codes");
  }
  return cb;
}

inline void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << codebook_to_json(cb).dump() << "\n";
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return codebook_from_json(nlohmann::json::parse(ss.str()));
}

}  // namespace storm::worldmodel
