#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "storm/core/error.hpp"
#include "storm/nn/mlp.hpp"

namespace storm::nn {

// Binary checkpoint of named real matrices.
//
// Byte layout, all integers and reals little-endian:
//   magic     8 bytes  "STRMCKPT"
//   version   u32      = 1
//   count     u32      number of entries
//   entries   count times:
//     name_len  u32
//     name      name_len bytes (UTF-8, no terminator)
//     rows      u32
//     cols      u32
//     values    rows*cols IEEE-754 f64, row-major
//
// An Mlp stored under prefix "p" contributes "p.dims" (1 x L+1, the layer
// widths) followed by "p.layer<i>.weight" (out x in) and "p.layer<i>.bias"
// (out x 1) for each layer in order.
class Checkpoint {
 public:
  static constexpr char kMagic[8] = {'S', 'T', 'R', 'M', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Matrix& value) {
    for (auto& e : entries_) {
      if (e.name == name) {
        e.value = value;
        return;
      }
    }
    entries_.push_back({name, value});
  }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return true;
    }
    return false;
  }

  const Matrix& get(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.value;
    }
    throw IoError("checkpoint has no entry '" + name + "'");
  }

  void put_scalar(const std::string& name, double v) { put(name, Matrix::Constant(1, 1, v)); }
  double get_scalar(const std::string& name) const { return get(name)(0, 0); }

  void put_mlp(const std::string& prefix, const Mlp& net) {
    Matrix dims(1, static_cast<Eigen::Index>(net.dims().size()));
    for (std::size_t i = 0; i < net.dims().size(); ++i) dims(0, static_cast<Eigen::Index>(i)) = net.dims()[i];
    put(prefix + ".dims", dims);
    for (int l = 0; l < net.num_layers(); ++l) {
      put(prefix + ".layer" + std::to_string(l) + ".weight", net.weight(l));
      put(prefix + ".layer" + std::to_string(l) + ".bias", net.bias(l));
    }
  }

  Mlp get_mlp(const std::string& prefix) const {
    const Matrix& d = get(prefix + ".dims");
    std::vector<int> dims;
    for (Eigen::Index i = 0; i < d.cols(); ++i) dims.push_back(static_cast<int>(d(0, i)));
    Mlp net = Mlp::zeros(dims);
    for (int l = 0; l < net.num_layers(); ++l) {
      const Matrix& w = get(prefix + ".layer" + std::to_string(l) + ".weight");
      const Matrix& b = get(prefix + ".layer" + std::to_string(l) + ".bias");
      if (w.rows() != net.weight(l).rows() || w.cols() != net.weight(l).cols() || b.rows() != net.bias(l).rows()) {
        throw IoError("checkpoint MLP '" + prefix + "' has inconsistent layer shapes");
      }
      net.weight(l) = w;
      net.bias(l) = b;
    }
    return net;
  }

  std::string serialize() const {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      put_u32(out, static_cast<std::uint32_t>(e.name.size()));
      out += e.name;
      put_u32(out, static_cast<std::uint32_t>(e.value.rows()));
      put_u32(out, static_cast<std::uint32_t>(e.value.cols()));
      for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
        for (Eigen::Index c = 0; c < e.value.cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>(e.value(r, c)));
      }
    }
    return out;
  }

  static Checkpoint deserialize(const std::string& bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > bytes.size()) throw IoError("truncated checkpoint");
    };
    need(sizeof(kMagic));
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file");
    pos = sizeof(kMagic);
    auto u32 = [&] {
      need(4);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
      pos += 4;
      return v;
    };
    auto u64 = [&] {
      need(8);
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
      pos += 8;
      return v;
    };
    if (u32() != kVersion) throw IoError("unsupported checkpoint version");
    const std::uint32_t count = u32();
    Checkpoint ck;
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::uint32_t len = u32();
      need(len);
      std::string name = bytes.substr(pos, len);
      pos += len;
      const std::uint32_t rows = u32();
      const std::uint32_t cols = u32();
      Matrix m(rows, cols);
      for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(u64());
      }
      ck.entries_.push_back({std::move(name), std::move(m)});
    }
    return ck;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
  }

 private:
  struct Entry {
    std::string name;
    Matrix value;
  };

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  std::vector<Entry> entries_;
};


}  // namespace storm::nn
