#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "storm/core/config.hpp"
#include "storm/harness/manifest.hpp"
#include "storm/harness/pipeline.hpp"

using namespace storm;
using namespace storm::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("storm_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Config tiny() {
  Config c;
  c.demo_episodes_per_task = 40;
  c.max_steps = 10;
  c.diffusion_steps_t = 10;
  c.policy_hidden = {16};
  c.policy_steps = 300;
  c.policy_batch = 8;
  c.wm_trunk_hidden = {16};
  c.wm_latent_dim = 8;
  c.wm_head_hidden = 8;
  c.wm_steps = 200;
  c.wm_batch = 8;
  c.heldout_fraction = 0.3;
  c.eval_variations = 3;
  c.eval_repeats = 2;
  c.n_sim = 3;
  c.k_candidates = 3;
  c.depth_d = 2;
  return c;
}

std::set<std::string> non_manifest_files(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind("manifest_", 0) != 0) out.insert(n);
  }
  return out;
}

void expect_same_files(const fs::path& a, const fs::path& b) {
  const auto fa = non_manifest_files(a);
  EXPECT_EQ(fa, non_manifest_files(b));
  for (const auto& f : fa) EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
}

}  // namespace

TEST(Manifest, GitBlobHashOfKnownContent) {
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Manifest, ConfigHashTracksContent) {
  Config a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(GenData, DefaultConfigCountsAndModeBalance) {
  const fs::path dir = fresh_dir("gen_default");
  const auto s = cmd_gen_data(Config{}, dir);
  EXPECT_GE(s.demo_chunks, 2000);
  EXPECT_GE(s.left_chunks, 0.4 * s.demo_chunks);
  EXPECT_GE(s.right_chunks, 0.4 * s.demo_chunks);
  EXPECT_GT(s.exploratory_transitions, 0);
  EXPECT_EQ(static_cast<int>(load_demos(dir).size()), s.demo_chunks);
  EXPECT_EQ(static_cast<int>(load_transitions(dir).size()), s.transitions);
  const auto m = nlohmann::json::parse(read_file(manifest_path(dir, "gen-data")));
  EXPECT_EQ(m.at("outputs").at("demos.jsonl"), file_hash(demos_path(dir)));
  EXPECT_EQ(m.at("extra").at("demo_chunks"), s.demo_chunks);
}

TEST(GenData, SameSeedIsByteIdentical) {
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  cmd_gen_data(tiny(), a);
  cmd_gen_data(tiny(), b);
  expect_same_files(a, b);
  Config other = tiny();
  other.seed = 99;
  other.demo_action_noise = 0.01;
  const fs::path d = fresh_dir("gen_d");
  cmd_gen_data(other, d);
  EXPECT_NE(read_file(demos_path(a)), read_file(demos_path(d)));
}

TEST(GenData, NoExplorationMeansExpertTransitionsOnly) {
  Config c = tiny();
  c.explore_ratio = 0.0;
  const auto s = cmd_gen_data(c, fresh_dir("gen_noexplore"));
  EXPECT_EQ(s.exploratory_transitions, 0);
  EXPECT_EQ(s.transitions, s.demo_chunks);
}

TEST(GenData, MissingDataNamesTheFix) {
  const fs::path dir = fresh_dir("gen_missing");
  try {
    cmd_train_policy(tiny(), dir);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos);
  }
}

TEST(LossLog, BlockMeansAndResumeMerge) {
  LossLog log({"a", "b"});
  for (long s = 0; s < 250; ++s) log.add(s, {static_cast<double>(s), 1.0});
  log.flush();
  ASSERT_EQ(log.rows().size(), 3u);
  EXPECT_DOUBLE_EQ(log.block_mean(0), 49.5);
  EXPECT_DOUBLE_EQ(log.block_mean(100), 149.5);
  EXPECT_DOUBLE_EQ(log.block_mean(200), 224.5);
  EXPECT_TRUE(std::isnan(log.block_mean(300)));

  LossLog first({"a", "b"}), second({"a", "b"});
  for (long s = 0; s < 200; ++s) first.add(s, {static_cast<double>(s), 1.0});
  for (long s = 200; s < 250; ++s) second.add(s, {static_cast<double>(s), 1.0});
  second.flush();
  second.prepend_csv(first.csv());
  EXPECT_EQ(second.csv(), log.csv());
}

TEST(Split, KeepsEpisodesWhole) {
  const auto ds = generate_datasets(tiny());
  const auto d = split_transitions(ds.transitions, 0.3);
  EXPECT_FALSE(d.train.empty());
  EXPECT_FALSE(d.heldout.empty());
  std::set<int> train_eps, held_eps;
  for (const auto& t : d.train) train_eps.insert(t.episode);
  for (const auto& t : d.heldout) held_eps.insert(t.episode);
  for (int e : held_eps) EXPECT_EQ(train_eps.count(e), 0u);
  EXPECT_EQ(d.train.size() + d.heldout.size(), ds.transitions.size());
}

TEST(TrainPolicy, ResumeReproducesUninterruptedRun) {
  const Config c = tiny();
  const fs::path a = fresh_dir("resume_a"), b = fresh_dir("resume_b");
  cmd_gen_data(c, a);
  cmd_gen_data(c, b);
  const auto full = cmd_train_policy(c, a);
  EXPECT_EQ(full.steps, c.policy_steps);
  EXPECT_FALSE(std::isnan(full.loss_at_100));

  const auto part = cmd_train_policy(c, b, {false, 200});
  EXPECT_EQ(part.steps, 200);
  const auto rest = cmd_train_policy(c, b, {true, -1});
  EXPECT_EQ(rest.steps, c.policy_steps);
  EXPECT_EQ(read_file(policy_path(a)), read_file(policy_path(b)));
  EXPECT_EQ(read_file(a / "policy_loss.csv"), read_file(b / "policy_loss.csv"));
  EXPECT_EQ(rest.final_loss, full.final_loss);

  EXPECT_THROW(cmd_train_policy(c, b, {false, 150}), ValidationError);
  const auto bj = nlohmann::json::parse(read_file(a / "policy_bimodality.json"));
  EXPECT_EQ(bj.at("samples"), kBimodalitySamples);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fresh_dir("pipeline");
    cmd_gen_data(tiny(), dir_);
    cmd_train_policy(tiny(), dir_);
    reward_ = cmd_train_worldmodel(tiny(), dir_, 20.0);
    cmd_train_worldmodel(tiny(), dir_, 0.0);
  }
  static fs::path copy_models(const std::string& name) {
    const fs::path d = fresh_dir(name);
    for (const auto& e : fs::directory_iterator(dir_)) fs::copy_file(e.path(), d / e.path().filename());
    return d;
  }
  static inline fs::path dir_;
  static inline WorldModelTrainSummary reward_;
};

TEST_F(Pipeline, WorldModelArtifacts) {
  EXPECT_TRUE(fs::exists(world_model_path(dir_, 20.0)));
  EXPECT_TRUE(fs::exists(world_model_path(dir_, 0.0)));
  EXPECT_TRUE(fs::exists(codebook_path(dir_)));
  const auto ev = nlohmann::json::parse(read_file(dir_ / "worldmodel_lambda20_eval.json"));
  EXPECT_TRUE(ev.contains("heldout_token_accuracy"));
  const std::string loss = read_file(dir_ / "worldmodel_lambda0_loss.csv");
  EXPECT_EQ(loss.rfind("step,", 0), 0u);
  EXPECT_NE(loss.find("reward"), std::string::npos);
  EXPECT_GE(reward_.heldout_accuracy, 0.0);
  EXPECT_LE(reward_.heldout_accuracy, 1.0);
}

TEST_F(Pipeline, EvalIsRepeatableAndIndependentOfJobs) {
  const fs::path one = copy_models("eval_one"), two = copy_models("eval_two"), again = copy_models("eval_again");
  EvalOptions o;
  o.flaky = 2;
  o.traces = true;
  o.tasks = {0, 2};
  const auto rows = cmd_eval(tiny(), one, o);
  cmd_eval(tiny(), again, o);
  o.jobs = 2;
  cmd_eval(tiny(), two, o);
  expect_same_files(one, two);
  expect_same_files(one, again);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].episodes, tiny().eval_variations * tiny().eval_repeats);
  EXPECT_TRUE(fs::exists(one / "traces_storm_put_on_target_flaky2.jsonl"));
  const auto ej = nlohmann::json::parse(read_file(one / "eval_storm_put_on_target_flaky2.json"));
  EXPECT_EQ(ej.at("manifest").at("config_hash"), config_hash(tiny()));
}

TEST_F(Pipeline, ReportMergesArmsAndRefusesConflicts) {
  const fs::path s = copy_models("report_storm"), r = copy_models("report_reactive");
  EvalOptions o;
  o.tasks = {0, 1};
  cmd_eval(tiny(), s, o);
  o.mode = planner::Mode::kReactive;
  cmd_eval(tiny(), r, o);
  const fs::path out = fresh_dir("report_out") / "summary.csv";
  const auto t = cmd_report({s, r}, out);
  ASSERT_EQ(t.methods.size(), 2u);
  EXPECT_EQ(t.tasks.size(), 2u);
  for (const auto& m : t.methods) {
    const auto& row = t.cells.at(m);
    EXPECT_DOUBLE_EQ(t.average(m), (row.at("put_on_target") + row.at("stack")) / 2.0);
  }
  EXPECT_EQ(cmd_report({s}, out).methods.size(), 1u);

  Config other = tiny();
  other.seed = 8;
  const fs::path x = copy_models("report_other");
  cmd_eval(other, x, o);
  EXPECT_THROW(cmd_report({s, x}, out), ValidationError);
  EXPECT_NO_THROW(cmd_report({s, x}, out, true));
}

TEST_F(Pipeline, AblationNeedsRewardArmAndProducesAllColumns) {
  Config zero = tiny();
  zero.lambda_reward = 0.0;
  EXPECT_THROW(cmd_ablate(zero, dir_), ValidationError);
  EXPECT_THROW(cmd_ablate(tiny(), fresh_dir("ablate_empty")), IoError);
  const fs::path d = copy_models("ablate");
  const auto rep = cmd_ablate(tiny(), d);
  EXPECT_TRUE(rep.a.reward_mse.has_value());
  EXPECT_FALSE(rep.b.reward_mse.has_value());
  const std::string csv = read_file(d / "ablation.csv");
  for (const char* col : {"fd_traj_total", "psnr", "ssim", "reward_mse"}) EXPECT_NE(csv.find(col), std::string::npos);
  const auto m = nlohmann::json::parse(read_file(manifest_path(d, "ablate")));
  EXPECT_TRUE(m.at("inputs").contains("worldmodel_lambda20.ckpt"));
  EXPECT_TRUE(m.at("inputs").contains("worldmodel_lambda0.ckpt"));
}

TEST(Eval, MissingCheckpointsAreReported) {
  EXPECT_THROW(cmd_eval(tiny(), fresh_dir("eval_missing"), EvalOptions{}), IoError);
}
