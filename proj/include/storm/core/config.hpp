#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/error.hpp"

namespace storm {

enum class PriorMode { kUniform, kDensity };

// Run configuration. Planner defaults follow the published MCTS settings;
// training budgets are sized for a single CPU core.
struct Config {
  std::uint64_t seed = 7;

  // Planner.
  int n_sim = 8;
  int depth_d = 3;
  double gamma = 0.9;
  double c_puct = 1.0;
  int k_candidates = 8;
  bool discounted_backup = true;
  std::string prior_mode = "uniform";

  // World model.
  double lambda_reward = 20.0;
  double beta_vq = 0.25;
  int codebook_size = 16;
  int wm_embed_dim = 4;
  std::vector<int> wm_trunk_hidden = {128};
  int wm_latent_dim = 64;
  int wm_head_hidden = 64;
  int wm_steps = 8000;
  int wm_batch = 64;
  double wm_lr = 2e-3;

  // Diffusion policy. Betas are linear over T steps; see NoiseSchedule.
  int diffusion_steps_t = 50;
  double beta_start = 2e-3;
  double beta_end = 0.4;
  int chunk_h = 4;
  std::vector<int> policy_hidden = {128, 128};
  int policy_steps = 40000;
  int policy_batch = 64;
  double policy_lr = 1e-3;

  // Shared optimizer settings.
  double weight_decay = 0.01;
  double clip_norm = 30.0;

  // Environment and data.
  int n_objects = 2;
  int max_steps = 30;
  int demo_episodes_per_task = 180;
  double explore_ratio = 0.3;
  double demo_action_noise = 0.0;
  double heldout_fraction = 0.1;

  // Evaluation.
  int eval_variations = 24;
  int eval_repeats = 3;

  PriorMode prior() const { return prior_mode == "density" ? PriorMode::kDensity : PriorMode::kUniform; }

  bool operator==(const Config&) const = default;
};

namespace detail {

template <class F>
void visit_config(Config& c, F&& f) {
  f("seed", c.seed);
  f("n_sim", c.n_sim);
  f("depth_d", c.depth_d);
  f("gamma", c.gamma);
  f("c_puct", c.c_puct);
  f("k_candidates", c.k_candidates);
  f("discounted_backup", c.discounted_backup);
  f("prior_mode", c.prior_mode);
  f("lambda_reward", c.lambda_reward);
  f("beta_vq", c.beta_vq);
  f("codebook_size", c.codebook_size);
  f("wm_embed_dim", c.wm_embed_dim);
  f("wm_trunk_hidden", c.wm_trunk_hidden);
  f("wm_latent_dim", c.wm_latent_dim);
  f("wm_head_hidden", c.wm_head_hidden);
  f("wm_steps", c.wm_steps);
  f("wm_batch", c.wm_batch);
  f("wm_lr", c.wm_lr);
  f("diffusion_steps_t", c.diffusion_steps_t);
  f("beta_start", c.beta_start);
  f("beta_end", c.beta_end);
  f("chunk_h", c.chunk_h);
  f("policy_hidden", c.policy_hidden);
  f("policy_steps", c.policy_steps);
  f("policy_batch", c.policy_batch);
  f("policy_lr", c.policy_lr);
  f("weight_decay", c.weight_decay);
  f("clip_norm", c.clip_norm);
  f("n_objects", c.n_objects);
  f("max_steps", c.max_steps);
  f("demo_episodes_per_task", c.demo_episodes_per_task);
  f("explore_ratio", c.explore_ratio);
  f("demo_action_noise", c.demo_action_noise);
  f("heldout_fraction", c.heldout_fraction);
  f("eval_variations", c.eval_variations);
  f("eval_repeats", c.eval_repeats);
}

template <class T>
void read_field(const std::string& key, const nlohmann::json& v, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key, "expected boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(key, "expected string");
    out = v.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    if (!v.is_array()) throw ConfigError(key, "expected array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(key, "expected array of integers");
      out.push_back(e.get<int>());
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned() || v.get<long long>() >= 0) {
        out = v.get<T>();
      } else {
        throw ConfigError(key, "expected non-negative integer");
      }
    } else {
      out = v.get<T>();
    }
  } else {
    if (!v.is_number()) throw ConfigError(key, "expected number");
    out = v.get<T>();
  }
}

}  // namespace detail

// Throws ValidationError naming the first out-of-range field.
inline void validate(const Config& c) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ValidationError(msg);
  };
  require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
  require(c.n_sim >= 1, "n_sim must be >= 1");
  require(c.depth_d >= 1, "depth_d must be >= 1");
  require(c.k_candidates >= 1, "k_candidates must be >= 1");
  require(c.c_puct >= 0.0, "c_puct must be >= 0");
  require(c.lambda_reward >= 0.0, "lambda_reward must be >= 0");
  require(c.beta_vq >= 0.0, "beta_vq must be >= 0");
  require(c.prior_mode == "uniform" || c.prior_mode == "density",
          "prior_mode must be 'uniform' or 'density'");
  require(c.codebook_size >= 2, "codebook_size must be >= 2");
  require(c.wm_embed_dim >= 1 && c.wm_latent_dim >= 1 && c.wm_head_hidden >= 1,
          "world-model widths must be >= 1");
  require(c.diffusion_steps_t >= 1, "diffusion_steps_t must be >= 1");
  require(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0,
          "betas must satisfy 0 < beta_start <= beta_end < 1");
  require(c.chunk_h >= 1, "chunk_h must be >= 1");
  require(c.policy_steps >= 0 && c.wm_steps >= 0, "training steps must be >= 0");
  require(c.policy_batch >= 1 && c.wm_batch >= 1, "batch sizes must be >= 1");
  require(c.policy_lr > 0.0 && c.wm_lr > 0.0, "learning rates must be > 0");
  require(c.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(c.clip_norm > 0.0, "clip_norm must be > 0");
  require(c.n_objects >= 2, "n_objects must be >= 2");
  require(c.max_steps >= 1, "max_steps must be >= 1");
  require(c.demo_episodes_per_task >= 1, "demo_episodes_per_task must be >= 1");
  require(c.explore_ratio >= 0.0 && c.explore_ratio < 1.0, "explore_ratio must lie in [0, 1)");
  require(c.demo_action_noise >= 0.0, "demo_action_noise must be >= 0");
  require(c.heldout_fraction >= 0.0 && c.heldout_fraction < 1.0,
          "heldout_fraction must lie in [0, 1)");
  require(c.eval_variations >= 1 && c.eval_variations <= 24, "eval_variations must lie in [1, 24]");
  require(c.eval_repeats >= 1, "eval_repeats must be >= 1");
}

inline Config config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  Config c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    detail::visit_config(c, [&](const char* name, auto& field) {
      if (it.key() == name) {
        detail::read_field(it.key(), it.value(), field);
        known = true;
      }
    });
    if (!known) throw ConfigError(it.key(), "unknown key");
  }
  validate(c);
  return c;
}

inline nlohmann::json config_to_json(const Config& config) {
  Config c = config;
  nlohmann::json j = nlohmann::json::object();
  detail::visit_config(c, [&](const char* name, auto& field) { j[name] = field; });
  return j;
}

// An empty or whitespace-only file yields the defaults.
inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return Config{};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<parse>", e.what());
  }
  return config_from_json(j);
}

inline void save_config(const Config& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path.string());
  out << config_to_json(c).dump(2) << "\n";
}

}  // namespace storm
