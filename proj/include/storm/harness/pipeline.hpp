#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "storm/core/config.hpp"
#include "storm/core/error.hpp"
#include "storm/core/trajectory.hpp"
#include "storm/env/tabletop.hpp"
#include "storm/harness/datagen.hpp"
#include "storm/harness/manifest.hpp"
#include "storm/harness/training.hpp"
#include "storm/metrics/ablation.hpp"
#include "storm/metrics/report.hpp"
#include "storm/planner/episode.hpp"
#include "storm/policy/bimodality.hpp"
#include "storm/policy/demos.hpp"
#include "storm/policy/diffusion_policy.hpp"
#include "storm/worldmodel/codebook.hpp"
#include "storm/worldmodel/world_model.hpp"

namespace storm::harness {

namespace fs = std::filesystem;

inline constexpr int kLossBlock = 100;
inline constexpr int kBimodalitySamples = 100;
inline constexpr double kBimodalityMinFraction = 0.2;

inline std::string lambda_tag(double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lambda);
  return buf;
}

inline fs::path demos_path(const fs::path& dir) { return dir / "demos.jsonl"; }
inline fs::path transitions_path(const fs::path& dir) { return dir / "transitions.jsonl"; }
inline fs::path policy_path(const fs::path& dir) { return dir / "policy.ckpt"; }
inline fs::path codebook_path(const fs::path& dir) { return dir / "codebook.json"; }
inline fs::path world_model_path(const fs::path& dir, double lambda) {
  return dir / ("worldmodel_lambda" + lambda_tag(lambda) + ".ckpt");
}

inline std::vector<policy::Demonstration> load_demos(const fs::path& dir) {
  std::ifstream in(demos_path(dir));
  if (!in) throw IoError("missing " + demos_path(dir).string() + " (run gen-data first)");
  return policy::read_demos_jsonl(in);
}

inline std::vector<worldmodel::Transition> load_transitions(const fs::path& dir) {
  std::ifstream in(transitions_path(dir));
  if (!in) throw IoError("missing " + transitions_path(dir).string() + " (run gen-data first)");
  return worldmodel::read_transitions_jsonl(in);
}

struct GenDataSummary {
  int demo_chunks = 0;
  int left_chunks = 0;
  int right_chunks = 0;
  int transitions = 0;
  int exploratory_transitions = 0;
};

inline GenDataSummary cmd_gen_data(const Config& c, const fs::path& dir) {
  validate(c);
  Manifest m = begin_manifest("gen-data", c);
  const Datasets d = generate_datasets(c);
  std::ostringstream demos, trans;
  policy::write_demos_jsonl(demos, d.demos);
  worldmodel::write_transitions_jsonl(trans, d.transitions);
  write_file(demos_path(dir), demos.str());
  write_file(transitions_path(dir), trans.str());
  GenDataSummary s;
  s.demo_chunks = static_cast<int>(d.demos.size());
  for (const auto& x : d.demos) (x.mode == 0 ? s.left_chunks : s.right_chunks) += 1;
  s.transitions = static_cast<int>(d.transitions.size());
  for (const auto& t : d.transitions) s.exploratory_transitions += t.exploratory ? 1 : 0;
  m.add_output(demos_path(dir));
  m.add_output(transitions_path(dir));
  m.extra = {{"demo_chunks", s.demo_chunks},
             {"left_chunks", s.left_chunks},
             {"right_chunks", s.right_chunks},
             {"transitions", s.transitions},
             {"exploratory_transitions", s.exploratory_transitions}};
  finish_manifest(m, dir);
  return s;
}

// Per-block mean losses, one row per kLossBlock steps: step is the block start.
class LossLog {
 public:
  explicit LossLog(std::vector<std::string> columns) : columns_(std::move(columns)), sums_(columns_.size(), 0.0) {}

  void add(long step, const std::vector<double>& losses) {
    if (count_ == 0) block_start_ = step - step % kLossBlock;
    for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += losses[i];
    ++count_;
    if ((step + 1) % kLossBlock == 0) flush();
  }

  void flush() {
    if (count_ == 0) return;
    std::vector<double> row;
    for (double& s : sums_) {
      row.push_back(s / count_);
      s = 0.0;
    }
    rows_.emplace_back(block_start_, std::move(row));
    count_ = 0;
  }

  const std::vector<std::pair<long, std::vector<double>>>& rows() const { return rows_; }

  // Mean of the first column in the block starting at `step`, or NaN.
  double block_mean(long step) const {
    for (const auto& [s, v] : rows_) {
      if (s == step) return v.front();
    }
    return std::nan("");
  }

  std::string csv() const {
    std::ostringstream out;
    out << "step";
    for (const auto& c : columns_) out << "," << c;
    out << "\n";
    for (const auto& [s, v] : rows_) {
      out << s;
      for (double x : v) out << "," << metrics::num(x);
      out << "\n";
    }
    return out.str();
  }

  // Appends rows from an earlier CSV written by csv() (used on resume).
  void prepend_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<long, std::vector<double>>> old;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');
      const long step = std::stol(cell);
      std::vector<double> v;
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
      old.emplace_back(step, std::move(v));
    }
    old.insert(old.end(), rows_.begin(), rows_.end());
    rows_ = std::move(old);
  }

 private:
  std::vector<std::string> columns_;
  std::vector<double> sums_;
  long count_ = 0;
  long block_start_ = 0;
  std::vector<std::pair<long, std::vector<double>>> rows_;
};

struct PolicyTrainOptions {
  bool resume = false;
  long stop_at = -1;  // stop early at this step (for resumable runs); -1 = policy_steps
};

struct PolicyTrainSummary {
  long steps = 0;
  double loss_at_100 = 0.0;
  double final_loss = 0.0;
  policy::ModeSplit modes;
  bool bimodal = false;
};

inline PolicyTrainSummary cmd_train_policy(const Config& c, const fs::path& dir, PolicyTrainOptions opts = {}) {
  validate(c);
  Manifest m = begin_manifest("train-policy", c);
  const auto demos = load_demos(dir);
  m.add_input(demos_path(dir));
  Rng init = rng_stream(c.seed, "policy-init");
  policy::DiffusionPolicy pol = policy::DiffusionPolicy::from_config(c, init);
  nn::OptimizerState opt = policy_optimizer(c, pol);
  LossLog log({"loss"});
  const fs::path loss_path = dir / "policy_loss.csv";
  if (opts.resume) {
    const nn::Checkpoint ck = nn::Checkpoint::load(policy_path(dir));
    pol = policy::DiffusionPolicy::load(ck);
    load_optimizer(ck, "policy_opt", opt);
    if (fs::exists(loss_path)) log.prepend_csv(read_file(loss_path));
  }
  const long end = opts.stop_at >= 0 ? std::min<long>(opts.stop_at, c.policy_steps) : c.policy_steps;
  // A partial loss block cannot be continued after a resume.
  if (end != c.policy_steps && end % kLossBlock != 0) {
    throw ValidationError("early stop must fall on a multiple of " + std::to_string(kLossBlock) + " steps");
  }
  train_policy(c, demos, pol, opt, end, [&](long s, const std::vector<double>& l) { log.add(s, l); });
  log.flush();

  nn::Checkpoint ck;
  pol.save(ck);
  save_optimizer(ck, "policy_opt", opt);
  ck.save(policy_path(dir));
  write_file(loss_path, log.csv());

  PolicyTrainSummary s;
  s.steps = opt.step;
  s.loss_at_100 = log.block_mean(kLossBlock);
  s.final_loss = log.rows().empty() ? std::nan("") : log.rows().back().second.front();
  Rng probe = rng_stream(c.seed, "bimodality");
  s.modes = policy::classify_modes(pol.sample_batch(policy::bimodality_probe(), kBimodalitySamples, probe));
  s.bimodal = s.modes.both_modes(kBimodalityMinFraction);
  const nlohmann::json bj = {{"up", s.modes.up},
                             {"down", s.modes.down},
                             {"neither", s.modes.neither},
                             {"samples", s.modes.total},
                             {"both_modes", s.bimodal},
                             {"min_fraction", kBimodalityMinFraction}};
  write_file(dir / "policy_bimodality.json", bj.dump(2) + "\n");
  m.add_output(policy_path(dir));
  m.add_output(loss_path);
  m.extra = {{"steps", s.steps}, {"loss_at_100", s.loss_at_100}, {"final_loss", s.final_loss}, {"bimodality", bj}};
  finish_manifest(m, dir);
  return s;
}

struct WorldModelData {
  std::vector<worldmodel::Transition> train;
  std::vector<worldmodel::Transition> heldout;
};

inline WorldModelData split_transitions(const std::vector<worldmodel::Transition>& all, double fraction) {
  WorldModelData d;
  for (const auto& t : all) (is_heldout(t.episode, fraction) ? d.heldout : d.train).push_back(t);
  if (d.train.empty()) throw ValidationError("held-out split left no training transitions");
  return d;
}

inline worldmodel::CodebookFit fit_codebook_on(const std::vector<worldmodel::Transition>& train, const Config& c) {
  std::vector<std::vector<double>> rows;
  rows.reserve(2 * train.size());
  for (const auto& t : train) {
    rows.push_back(t.obs.features());
    rows.push_back(t.next_obs.features());
  }
  return worldmodel::fit_codebook(rows, c.codebook_size, c.beta_vq);
}

struct WorldModelTrainSummary {
  double lambda = 0.0;
  double video = 0.0;
  double reward = 0.0;
  double heldout_accuracy = 0.0;
  double heldout_accuracy_put_on_target = 0.0;
  double heldout_reward_mse = 0.0;
  std::vector<std::string> warnings;
};

inline std::vector<worldmodel::Transition> clean_task(const std::vector<worldmodel::Transition>& ts, int task) {
  std::vector<worldmodel::Transition> out;
  for (const auto& t : ts) {
    if (t.obs.task_id == task) out.push_back(t);
  }
  return out;
}

inline WorldModelTrainSummary cmd_train_worldmodel(const Config& c, const fs::path& dir, double lambda,
                                                   long stop_at = -1) {
  validate(c);
  if (lambda < 0.0) throw ValidationError("reward weight must be >= 0");
  Manifest m = begin_manifest("train-worldmodel_lambda" + lambda_tag(lambda), c);
  const auto data = split_transitions(load_transitions(dir), c.heldout_fraction);
  m.add_input(transitions_path(dir));
  const worldmodel::CodebookFit fit = fit_codebook_on(data.train, c);
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  worldmodel::save_codebook(fit.codebook, codebook_path(dir));

  Rng init = rng_stream(c.seed, "wm-init");
  worldmodel::WorldModel wm = worldmodel::WorldModel::from_config(fit.codebook, c, init);
  nn::OptimizerState opt = world_model_optimizer(c, wm);
  const worldmodel::EncodedBatch train = worldmodel::encode_transitions(data.train, fit.codebook);
  LossLog log({"video", "reward", "total"});
  const long end = stop_at >= 0 ? std::min<long>(stop_at, c.wm_steps) : c.wm_steps;
  train_world_model(c, train, lambda, wm, opt, end, [&](long s, const std::vector<double>& l) { log.add(s, l); });
  log.flush();

  nn::Checkpoint ck;
  wm.save(ck);
  ck.put_scalar("wm.lambda", lambda);
  ck.save(world_model_path(dir, lambda));
  const fs::path loss_path = dir / ("worldmodel_lambda" + lambda_tag(lambda) + "_loss.csv");
  write_file(loss_path, log.csv());

  WorldModelTrainSummary s;
  s.lambda = lambda;
  s.warnings = fit.warnings;
  if (!log.rows().empty()) {
    s.video = log.rows().back().second[0];
    s.reward = log.rows().back().second[1];
  }
  if (!data.heldout.empty()) {
    const auto ho = worldmodel::encode_transitions(data.heldout, fit.codebook);
    s.heldout_accuracy = wm.token_accuracy(ho);
    s.heldout_reward_mse = (wm.predict_rewards(ho) - ho.rewards).squaredNorm() / ho.size();
    const auto pot = clean_task(data.heldout, static_cast<int>(env::TaskKind::kPutOnTarget));
    if (!pot.empty()) s.heldout_accuracy_put_on_target = wm.token_accuracy(worldmodel::encode_transitions(pot, fit.codebook));
  }
  const nlohmann::json ej = {{"lambda", lambda},
                             {"final_video_loss", s.video},
                             {"final_reward_loss", s.reward},
                             {"heldout_token_accuracy", s.heldout_accuracy},
                             {"heldout_token_accuracy_put_on_target", s.heldout_accuracy_put_on_target},
                             {"heldout_reward_mse", s.heldout_reward_mse},
                             {"warnings", s.warnings}};
  write_file(dir / ("worldmodel_lambda" + lambda_tag(lambda) + "_eval.json"), ej.dump(2) + "\n");
  m.add_output(codebook_path(dir));
  m.add_output(world_model_path(dir, lambda));
  m.add_output(loss_path);
  m.extra = ej;
  finish_manifest(m, dir);
  return s;
}

// Matched episode streams: both arms see the same seed for a given
// (task, flaky, variation, repeat).
inline Rng episode_stream(const Config& c, int task, int flaky, int variation, int repeat) {
  const std::uint64_t key = static_cast<std::uint64_t>(task) * 1'000'000 + static_cast<std::uint64_t>(flaky) * 10'000 +
                            static_cast<std::uint64_t>(variation) * 100 + static_cast<std::uint64_t>(repeat);
  return rng_stream(c.seed ^ detail::splitmix64(key), "episode");
}

struct EpisodeRecord {
  int variation = 0;
  int repeat = 0;
  planner::EpisodeResult result;
};

struct EvalOptions {
  planner::Mode mode = planner::Mode::kStorm;
  std::vector<int> tasks = {0, 1, 2};
  int flaky = 0;
  int jobs = 1;
  bool traces = false;
};

struct Models {
  policy::DiffusionPolicy policy;
  worldmodel::WorldModel world_model;
  bool has_world_model = false;
};

inline Models load_models(const Config& c, const fs::path& dir, bool need_world_model) {
  Models m;
  if (!fs::exists(policy_path(dir))) throw IoError("missing " + policy_path(dir).string() + " (run train-policy first)");
  m.policy = policy::DiffusionPolicy::load(nn::Checkpoint::load(policy_path(dir)));
  if (need_world_model) {
    const fs::path p = world_model_path(dir, c.lambda_reward);
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (run train-worldmodel first)");
    m.world_model = worldmodel::WorldModel::load(nn::Checkpoint::load(p));
    m.has_world_model = true;
  }
  return m;
}

// Runs every (variation, repeat) episode of one task; parallel workers share
// the read-only models and results come back in (variation, repeat) order.
inline std::vector<EpisodeRecord> run_task_episodes(const Config& c, const Models& models, int task,
                                                    const EvalOptions& o) {
  std::vector<EpisodeRecord> out(static_cast<std::size_t>(c.eval_variations * c.eval_repeats));
  const planner::PolicyProposer proposer{&models.policy, c.prior()};
  const planner::LearnedModel model{&models.world_model};
  const planner::SearchParams sp = planner::search_params(c);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < static_cast<int>(out.size()); i = next++) {
      const int v = i / c.eval_repeats;
      const int r = i % c.eval_repeats;
      env::TaskSpec spec = task_spec(c, task, o.flaky);
      spec.variation_id = v;
      Rng rng = episode_stream(c, task, o.flaky, v, r);
      auto res = planner::run_episode(env::reset(spec), proposer, model, sp, o.mode, rng, o.traces);
      res.trajectory.seed = c.seed;
      res.trajectory.variation_id = v;
      out[static_cast<std::size_t>(i)] = {v, r, std::move(res)};
    }
  };
  const int jobs = std::max(1, o.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline std::string eval_tag(planner::Mode mode, int task, int flaky) {
  return std::string(planner::mode_name(mode)) + "_" + std::string(env::task_name(static_cast<env::TaskKind>(task))) +
         "_flaky" + std::to_string(flaky);
}

inline std::string traces_jsonl(const std::vector<EpisodeRecord>& eps) {
  std::ostringstream out;
  for (const auto& e : eps) {
    for (std::size_t step = 0; step < e.result.plans.size(); ++step) {
      const auto& p = e.result.plans[step];
      for (const auto& t : p.trace) {
        nlohmann::json j = planner::trace_to_json(t);
        j["variation"] = e.variation;
        j["repeat"] = e.repeat;
        j["step"] = step;
        out << j.dump() << "\n";
      }
      const nlohmann::json root = {{"variation", e.variation}, {"repeat", e.repeat}, {"step", step},
                                   {"root_visits", p.visits},  {"root_q", p.q},      {"chosen", p.chosen_index}};
      out << root.dump() << "\n";
    }
  }
  return out.str();
}

inline std::vector<metrics::EvalRow> cmd_eval(const Config& c, const fs::path& dir, const EvalOptions& o) {
  validate(c);
  if (o.flaky < 0) throw ValidationError("--flaky must be >= 0");
  for (int t : o.tasks) {
    if (t < 0 || t >= env::kNumTasks) throw ValidationError("unknown task index " + std::to_string(t));
  }
  const Models models = load_models(c, dir, o.mode == planner::Mode::kStorm);
  std::vector<metrics::EvalRow> rows;
  for (int task : o.tasks) {
    const std::string tag = eval_tag(o.mode, task, o.flaky);
    Manifest m = begin_manifest("eval_" + tag, c);
    m.add_input(policy_path(dir));
    if (models.has_world_model) m.add_input(world_model_path(dir, c.lambda_reward));
    const auto eps = run_task_episodes(c, models, task, o);
    std::vector<Trajectory> trajs;
    std::ostringstream tj;
    for (const auto& e : eps) {
      trajs.push_back(e.result.trajectory);
      write_trajectory_jsonl(tj, e.result.trajectory);
    }
    const metrics::EvalRow row = metrics::make_row(std::string(planner::mode_name(o.mode)), task, o.flaky, trajs);
    rows.push_back(row);
    const fs::path traj_path = dir / ("trajectories_" + tag + ".jsonl");
    const fs::path csv_path = dir / ("eval_" + tag + ".csv");
    const fs::path json_path = dir / ("eval_" + tag + ".json");
    write_file(traj_path, tj.str());
    write_file(csv_path, metrics::eval_csv({row}));
    const nlohmann::json rj = {{"manifest", m.reference()}, {"rows", metrics::rows_to_json({row})}};
    write_file(json_path, rj.dump(2) + "\n");
    m.add_output(traj_path);
    m.add_output(csv_path);
    m.add_output(json_path);
    if (o.traces && o.mode == planner::Mode::kStorm) {
      const fs::path trace_path = dir / ("traces_" + tag + ".jsonl");
      write_file(trace_path, traces_jsonl(eps));
      m.add_output(trace_path);
    }
    finish_manifest(m, dir);
  }
  return rows;
}

inline metrics::AblationReport cmd_ablate(const Config& c, const fs::path& dir) {
  validate(c);
  if (c.lambda_reward <= 0.0) throw ValidationError("ablation needs lambda_reward > 0 for the reward arm");
  Manifest m = begin_manifest("ablate", c);
  const fs::path pa = world_model_path(dir, c.lambda_reward);
  const fs::path pb = world_model_path(dir, 0.0);
  for (const auto& p : {pa, pb}) {
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (train both world-model arms first)");
  }
  const worldmodel::WorldModel a = worldmodel::WorldModel::load(nn::Checkpoint::load(pa));
  const worldmodel::WorldModel b = worldmodel::WorldModel::load(nn::Checkpoint::load(pb));
  m.add_input(pa);
  m.add_input(pb);
  m.add_input(transitions_path(dir));
  const auto data = split_transitions(load_transitions(dir), c.heldout_fraction);
  const auto eval = metrics::group_episodes(data.heldout);
  Config cb = c;
  cb.lambda_reward = 0.0;
  const metrics::AblationReport r =
      metrics::ablation_compare({"action+reward", &a, c, true}, {"action-only", &b, cb, false}, eval);
  write_file(dir / "ablation.csv", metrics::ablation_csv(r));
  write_file(dir / "ablation_long.csv", metrics::ablation_long_csv(r));
  const nlohmann::json j = {{"manifest", m.reference()},
                            {"arms", {metrics::arm_to_json(r.a), metrics::arm_to_json(r.b)}},
                            {"fd_traj_delta", r.fd_delta},
                            {"lpips", "not computed"}};
  write_file(dir / "ablation.json", j.dump(2) + "\n");
  for (const char* f : {"ablation.csv", "ablation_long.csv", "ablation.json"}) m.add_output(dir / f);
  finish_manifest(m, dir);
  return r;
}

// Merges eval_*.csv reports from run directories into a methods x tasks table.
inline metrics::SummaryTable cmd_report(const std::vector<fs::path>& dirs, const fs::path& out, bool force = false) {
  if (dirs.empty()) throw ValidationError("report needs at least one run directory");
  std::vector<metrics::EvalRow> rows;
  std::string hash;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("eval_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const fs::path mp = manifest_path(dir, stem);
      if (fs::exists(mp)) {
        const auto mj = nlohmann::json::parse(read_file(mp));
        const std::string h = mj.at("config_hash").get<std::string>();
        if (hash.empty()) {
          hash = h;
        } else if (h != hash && !force) {
          throw ValidationError("runs use different configurations (" + hash + " vs " + h + "); pass --force to merge");
        }
      }
      for (auto& r : metrics::parse_eval_csv(read_file(f))) rows.push_back(std::move(r));
    }
  }
  if (rows.empty()) throw ValidationError("no eval reports found");
  const metrics::SummaryTable t = metrics::summary_table(rows);
  write_file(out, metrics::summary_csv(t));
  return t;
}

}  // namespace storm::harness
