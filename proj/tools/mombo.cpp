#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mombo/harness.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  bool quiet = false;
};

mombo::RunConfig build_config(const GlobalOpts& opts) {
  mombo::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = mombo::load_run_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline model-based RL with moment-matched pessimistic Bellman targets"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "JSON run configuration file");
  app.add_option("--out", opts.out_dir, "output directory (overrides config)");
  app.add_option("--seed", opts.seed, "single seed (overrides config seeds)");
  app.add_flag("--quiet", opts.quiet, "suppress progress output");

  std::string env_override, strategy_override, mix_override;
  int size_override = -1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--env", env_override, "environment name");
    sub->add_option("--strategy", strategy_override, "mopo | mobile | mombo");
  };

  CLI::App* gen = app.add_subcommand("gen-dataset", "generate an offline dataset");
  gen->fallthrough();
  add_common(gen);
  gen->add_option("--mix", mix_override, "random | medium | expert | expert ratio in [0,1]");
  gen->add_option("--size", size_override, "transition count");

  CLI::App* dyn = app.add_subcommand("train-dynamics", "train the dynamics ensemble");
  dyn->fallthrough();
  add_common(dyn);

  CLI::App* train = app.add_subcommand("train", "train a policy with the chosen strategy");
  train->fallthrough();
  add_common(train);
  long steps_override = -1;
  double stop_override = -2.0;
  train->add_option("--steps", steps_override, "gradient step budget");
  train->add_option("--stop-at", stop_override, "early stop at this normalized return");

  CLI::App* uq = app.add_subcommand("eval-uq", "accuracy/tightness of the reward penalizers");
  uq->fallthrough();
  add_common(uq);

  CLI::App* fig = app.add_subcommand("fig-mm-vs-mc",
                                     "moment matching vs Monte Carlo estimator comparison");
  fig->fallthrough();
  add_common(fig);

  CLI::App* bounds = app.add_subcommand("bounds", "suboptimality bound report for a checkpoint");
  bounds->fallthrough();
  add_common(bounds);
  std::string ckpt_override;
  bounds->add_option("--checkpoint", ckpt_override, "network checkpoint path");

  CLI::App* agg = app.add_subcommand("aggregate", "aggregate learning-curve CSVs");
  agg->fallthrough();
  std::vector<std::string> curve_files;
  agg->add_option("curves", curve_files, "curve CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    mombo::RunConfig cfg = build_config(opts);
    if (!env_override.empty()) cfg.env = env_override;
    if (!strategy_override.empty()) {
      cfg.strategy = strategy_override;
      cfg.penalty.strategy = mombo::strategy_from_string(strategy_override);
    }
    if (!mix_override.empty()) cfg.mix = mix_override;
    if (size_override > 0) cfg.dataset_size = size_override;
    if (steps_override > 0) cfg.train.steps = steps_override;
    if (stop_override > -2.0) cfg.train.stop_at_normalized = stop_override;
    if (!ckpt_override.empty()) cfg.checkpoint_path = ckpt_override;

    if (gen->parsed()) return mombo::cmd_gen_dataset(cfg, opts.quiet);
    if (dyn->parsed()) return mombo::cmd_train_dynamics(cfg, opts.quiet);
    if (train->parsed()) return mombo::cmd_train(cfg, opts.quiet);
    if (uq->parsed()) return mombo::cmd_eval_uq(cfg, opts.quiet);
    if (fig->parsed()) return mombo::cmd_fig_mm_vs_mc(cfg, opts.quiet);
    if (bounds->parsed()) return mombo::cmd_bounds(cfg, opts.quiet);
    if (agg->parsed()) return mombo::cmd_aggregate(cfg, curve_files, opts.quiet);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
