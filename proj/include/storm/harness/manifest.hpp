#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "storm/core/config.hpp"
#include "storm/core/error.hpp"

namespace storm::harness {

inline std::string to_hex(const unsigned char* data, unsigned int n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 15]);
  }
  return out;
}

// SHA-1 of "blob <size>\0<content>", the hash git assigns to a file.
inline std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw IoError("cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw IoError("SHA-1 digest failed");
  return to_hex(md, len);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
  if (!out) throw IoError("write failed for " + p.string());
}

inline std::string file_hash(const std::filesystem::path& p) { return git_blob_hash(read_file(p)); }

inline std::string config_hash(const Config& c) { return git_blob_hash(config_to_json(c).dump()); }

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance of one command invocation. Reports embed only the
// deterministic part (see reference()); the timestamp stays in the manifest.
struct Manifest {
  std::string command;
  Config config;
  std::map<std::string, std::string> inputs;   // file name -> content hash
  std::map<std::string, std::string> outputs;  // file name -> content hash
  nlohmann::json extra = nlohmann::json::object();
  std::string started;
  std::string finished;

  void add_input(const std::filesystem::path& p) { inputs[p.filename().string()] = file_hash(p); }
  void add_output(const std::filesystem::path& p) { outputs[p.filename().string()] = file_hash(p); }

  nlohmann::json reference() const {
    return {{"command", command}, {"config_hash", config_hash(config)}, {"seed", config.seed}, {"inputs", inputs}};
  }

  nlohmann::json to_json() const {
    nlohmann::json j = reference();
    j["config"] = config_to_json(config);
    j["outputs"] = outputs;
    j["extra"] = extra;
    j["started"] = started;
    j["finished"] = finished;
    return j;
  }
};

inline Manifest begin_manifest(const std::string& command, const Config& c) {
  Manifest m;
  m.command = command;
  m.config = c;
  m.started = utc_timestamp();
  return m;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& command) {
  return dir / ("manifest_" + command + ".json");
}

inline void finish_manifest(Manifest& m, const std::filesystem::path& dir) {
  m.finished = utc_timestamp();
  write_file(manifest_path(dir, m.command), m.to_json().dump(2) + "\n");
}

}  // namespace storm::harness
