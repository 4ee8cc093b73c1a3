#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "storm/harness/case_study.hpp"
#include "storm/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace storm;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs/default";
  int jobs = 1;
};

Config resolve_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  validate(c);
  return c;
}

std::vector<int> parse_tasks(const std::string& s) {
  if (s == "all") return {0, 1, 2};
  return {static_cast<int>(env::task_from_name(s))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Search-guided planning with a diffusion proposal policy and a learned world model"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (missing keys take defaults)");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out-dir", g.out_dir, "Run directory for datasets, checkpoints and reports");
  app.add_option("--jobs", g.jobs, "Parallel episode workers for eval")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate expert demonstrations and world-model transitions");

  auto* tp = app.add_subcommand("train-policy", "Train the diffusion proposal policy");
  bool resume = false;
  long stop_at = -1;
  tp->add_flag("--resume", resume, "Continue from policy.ckpt in the run directory");
  tp->add_option("--steps", stop_at, "Stop after this many total optimizer steps");

  auto* tw = app.add_subcommand("train-worldmodel", "Fit the codebook and train the world model");
  std::optional<double> lambda;
  tw->add_option("--reward-weight", lambda, "Reward loss weight (default: config lambda_reward)");

  auto* ev = app.add_subcommand("eval", "Run evaluation episodes");
  std::string mode = "storm", task = "all";
  int flaky = 0;
  bool traces = false;
  ev->add_option("--mode", mode, "storm or reactive")->check(CLI::IsMember({"storm", "reactive"}));
  ev->add_option("--task", task, "put_on_target, stack, put_in_zone or all");
  ev->add_option("--flaky", flaky, "Number of grasp attempts that fail before one succeeds");
  ev->add_flag("--traces", traces, "Write per-simulation search traces (storm mode)");

  auto* ab = app.add_subcommand("ablate", "Compare the reward-supervised and action-only world models");

  auto* rp = app.add_subcommand("report", "Merge eval reports into a methods x tasks table");
  std::vector<std::string> dirs;
  std::string out = "summary.csv";
  bool force = false;
  rp->add_option("dirs", dirs, "Run directories")->required();
  rp->add_option("--out", out, "Output CSV");
  rp->add_flag("--force", force, "Merge even when config hashes differ");

  auto* cs = app.add_subcommand("case-study", "Flaky-grasp recovery scenario over fixed seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const fs::path dir = g.out_dir;
    if (*rp) {
      const auto t = harness::cmd_report({dirs.begin(), dirs.end()}, out, force);
      std::cout << metrics::summary_csv(t);
      return 0;
    }
    const Config c = resolve_config(g);
    if (*gen) {
      const auto s = harness::cmd_gen_data(c, dir);
      std::printf("demo chunks %d (left %d, right %d), transitions %d (%d exploratory)\n", s.demo_chunks,
                  s.left_chunks, s.right_chunks, s.transitions, s.exploratory_transitions);
    } else if (*tp) {
      const auto s = harness::cmd_train_policy(c, dir, {resume, stop_at});
      std::printf("steps %ld, loss@100 %.6f, final %.6f, modes up %d down %d neither %d (%s)\n", s.steps,
                  s.loss_at_100, s.final_loss, s.modes.up, s.modes.down, s.modes.neither,
                  s.bimodal ? "both modes" : "mode collapse");
    } else if (*tw) {
      const auto s = harness::cmd_train_worldmodel(c, dir, lambda.value_or(c.lambda_reward));
      std::printf("lambda %g: video %.6f reward %.6f, held-out accuracy %.4f (put_on_target %.4f), reward mse %.6f\n",
                  s.lambda, s.video, s.reward, s.heldout_accuracy, s.heldout_accuracy_put_on_target,
                  s.heldout_reward_mse);
    } else if (*ev) {
      harness::EvalOptions o;
      o.mode = planner::mode_from_name(mode);
      o.tasks = parse_tasks(task);
      o.flaky = flaky;
      o.jobs = g.jobs;
      o.traces = traces;
      std::cout << metrics::eval_csv(harness::cmd_eval(c, dir, o));
    } else if (*ab) {
      std::cout << metrics::ablation_csv(harness::cmd_ablate(c, dir));
    } else if (*cs) {
      const auto models = harness::load_models(c, dir, true);
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : harness::run_case_study(c, models)) j.push_back(harness::case_to_json(r, c.max_steps));
      harness::write_file(dir / "case_study.json", j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
