#include "mombo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "mombo/mc_oracle.hpp"
#include "mombo/svg.hpp"

namespace mombo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void read_penalty(const json& j, PenaltyConfig& p) {
  if (j.contains("strategy")) p.strategy = strategy_from_string(j["strategy"].get<std::string>());
  p.beta = j.value("beta", p.beta);
  p.n_mc = j.value("n_mc", p.n_mc);
  p.gamma = j.value("gamma", p.gamma);
  p.rmax = j.value("rmax", p.rmax);
  p.horizon = j.value("horizon", p.horizon);
  p.delta = j.value("delta", p.delta);
}

void read_sac(const json& j, SacConfig& s) {
  s.gamma = j.value("gamma", s.gamma);
  s.tau = j.value("tau", s.tau);
  s.batch = j.value("batch", s.batch);
  s.lr_actor = j.value("lr_actor", s.lr_actor);
  s.lr_critic = j.value("lr_critic", s.lr_critic);
  s.lr_alpha = j.value("lr_alpha", s.lr_alpha);
  s.hidden_actor = j.value("hidden_actor", s.hidden_actor);
  s.hidden_critic = j.value("hidden_critic", s.hidden_critic);
  s.real_ratio = j.value("real_ratio", s.real_ratio);
  s.learn_alpha = j.value("learn_alpha", s.learn_alpha);
  s.alpha_init = j.value("alpha_init", s.alpha_init);
}

void read_ensemble(const json& j, EnsembleConfig& e) {
  e.n_members = j.value("n_members", e.n_members);
  e.n_elites = j.value("n_elites", e.n_elites);
  e.hidden = j.value("hidden", e.hidden);
  e.lr = j.value("lr", e.lr);
  e.batch = j.value("batch", e.batch);
  e.logvar_min = j.value("logvar_min", e.logvar_min);
  e.logvar_max = j.value("logvar_max", e.logvar_max);
  e.weight_decay = j.value("weight_decay", e.weight_decay);
  e.early_stop_patience = j.value("early_stop_patience", e.early_stop_patience);
  e.max_epochs = j.value("max_epochs", e.max_epochs);
  e.val_size = j.value("val_size", e.val_size);
}

void read_train(const json& j, TrainConfig& t) {
  t.steps = j.value("steps", t.steps);
  t.eval_interval = j.value("eval_interval", t.eval_interval);
  t.eval_episodes = j.value("eval_episodes", t.eval_episodes);
  t.rollout_freq = j.value("rollout_freq", t.rollout_freq);
  t.rollout_batch = j.value("rollout_batch", t.rollout_batch);
  t.rollout_k = j.value("rollout_k", t.rollout_k);
  t.retain_rollouts = j.value("retain_rollouts", t.retain_rollouts);
  t.stop_at_normalized = j.value("stop_at_normalized", t.stop_at_normalized);
}

}  // namespace

RunConfig run_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  cfg.env = j.value("env", cfg.env);
  cfg.strategy = j.value("strategy", cfg.strategy);
  cfg.mix = j.contains("mix") && j["mix"].is_number()
                ? std::to_string(j["mix"].get<double>())
                : j.value("mix", cfg.mix);
  cfg.dataset_size = j.value("dataset_size", cfg.dataset_size);
  cfg.dataset_seed = j.value("dataset_seed", cfg.dataset_seed);
  cfg.seeds = j.value("seeds", cfg.seeds);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.dataset_path = j.value("dataset_path", cfg.dataset_path);
  cfg.dynamics_path = j.value("dynamics_path", cfg.dynamics_path);
  cfg.checkpoint_path = j.value("checkpoint_path", cfg.checkpoint_path);
  if (j.contains("penalty")) read_penalty(j["penalty"], cfg.penalty);
  cfg.penalty.strategy = strategy_from_string(cfg.strategy);
  if (j.contains("sac")) read_sac(j["sac"], cfg.sac);
  if (j.contains("ensemble")) read_ensemble(j["ensemble"], cfg.ensemble);
  if (j.contains("train")) read_train(j["train"], cfg.train);
  cfg.mc_grid = j.value("mc_grid", cfg.mc_grid);
  cfg.fig_reps = j.value("fig_reps", cfg.fig_reps);
  cfg.fig_ref_samples = j.value("fig_ref_samples", cfg.fig_ref_samples);
  cfg.belief_mean = j.value("belief_mean", cfg.belief_mean);
  cfg.belief_var = j.value("belief_var", cfg.belief_var);
  cfg.bounds_n_grid = j.value("bounds_n_grid", cfg.bounds_n_grid);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_run_config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["env"] = cfg.env;
  j["strategy"] = cfg.strategy;
  j["mix"] = cfg.mix;
  j["dataset_size"] = cfg.dataset_size;
  j["dataset_seed"] = cfg.dataset_seed;
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["dataset_path"] = cfg.dataset_path;
  j["dynamics_path"] = cfg.dynamics_path;
  j["checkpoint_path"] = cfg.checkpoint_path;
  j["penalty"] = {{"beta", cfg.penalty.beta},     {"n_mc", cfg.penalty.n_mc},
                  {"gamma", cfg.penalty.gamma},   {"rmax", cfg.penalty.rmax},
                  {"horizon", cfg.penalty.horizon}, {"delta", cfg.penalty.delta}};
  j["sac"] = {{"gamma", cfg.sac.gamma},
              {"tau", cfg.sac.tau},
              {"batch", cfg.sac.batch},
              {"lr_actor", cfg.sac.lr_actor},
              {"lr_critic", cfg.sac.lr_critic},
              {"lr_alpha", cfg.sac.lr_alpha},
              {"hidden_actor", cfg.sac.hidden_actor},
              {"hidden_critic", cfg.sac.hidden_critic},
              {"real_ratio", cfg.sac.real_ratio},
              {"learn_alpha", cfg.sac.learn_alpha},
              {"alpha_init", cfg.sac.alpha_init}};
  j["ensemble"] = {{"n_members", cfg.ensemble.n_members},
                   {"n_elites", cfg.ensemble.n_elites},
                   {"hidden", cfg.ensemble.hidden},
                   {"lr", cfg.ensemble.lr},
                   {"batch", cfg.ensemble.batch},
                   {"logvar_min", cfg.ensemble.logvar_min},
                   {"logvar_max", cfg.ensemble.logvar_max},
                   {"weight_decay", cfg.ensemble.weight_decay},
                   {"early_stop_patience", cfg.ensemble.early_stop_patience},
                   {"max_epochs", cfg.ensemble.max_epochs},
                   {"val_size", cfg.ensemble.val_size}};
  j["train"] = {{"steps", cfg.train.steps},
                {"eval_interval", cfg.train.eval_interval},
                {"eval_episodes", cfg.train.eval_episodes},
                {"rollout_freq", cfg.train.rollout_freq},
                {"rollout_batch", cfg.train.rollout_batch},
                {"rollout_k", cfg.train.rollout_k},
                {"retain_rollouts", cfg.train.retain_rollouts},
                {"stop_at_normalized", cfg.train.stop_at_normalized}};
  j["mc_grid"] = cfg.mc_grid;
  j["fig_reps"] = cfg.fig_reps;
  j["fig_ref_samples"] = cfg.fig_ref_samples;
  j["belief_mean"] = cfg.belief_mean;
  j["belief_var"] = cfg.belief_var;
  j["bounds_n_grid"] = cfg.bounds_n_grid;
  return j.dump(2);
}

void dump_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_run_config: cannot open " + path);
  out << run_config_to_json(cfg) << "\n";
}

std::pair<double, double> uq_scores(const std::vector<double>& penalties,
                                    const std::vector<double>& errors) {
  if (penalties.size() != errors.size() || penalties.empty())
    throw std::invalid_argument("uq_scores: mismatched or empty inputs");
  double acc = 0.0, tight = 0.0;
  for (std::size_t i = 0; i < penalties.size(); ++i) {
    acc += penalties[i] >= errors[i] ? 1.0 : 0.0;
    tight += penalties[i] - errors[i];
  }
  const double n = static_cast<double>(penalties.size());
  return {acc / n, tight / n};
}

CsvTable trace_to_csv(const PropagationTrace& trace) {
  CsvTable table;
  table.header = {"stage", "unit", "mean", "variance"};
  for (std::size_t s = 0; s < trace.stages.size(); ++s)
    for (int u = 0; u < trace.stages[s].dim(); ++u)
      table.rows.push_back({static_cast<double>(s), static_cast<double>(u),
                            trace.stages[s].mean(u), trace.stages[s].variance(u)});
  return table;
}

MetricsReport make_metrics_report(const TrainResult& train, const UqResult& uq) {
  MetricsReport report;
  for (const auto& point : train.curve)
    report.checkpoint_normalized.push_back(point.normalized_return);
  report.aulc = aulc(train.curve);
  report.final_return = train.final_normalized;
  report.accuracy = uq.accuracy;
  report.tightness = uq.tightness;
  std::vector<double> penalties;
  for (const auto& point : train.curve) penalties.push_back(point.mean_penalty);
  if (!penalties.empty()) {
    report.penalty_mean =
        std::accumulate(penalties.begin(), penalties.end(), 0.0) / penalties.size();
    double var = 0.0;
    for (double p : penalties) var += (p - report.penalty_mean) * (p - report.penalty_mean);
    report.penalty_std =
        penalties.size() > 1 ? std::sqrt(var / (penalties.size() - 1)) : 0.0;
  }
  return report;
}

UqResult evaluate_uq(const ToyEnv& env, const SacState& sac, const EnsembleModel& model,
                     const PenaltyConfig& cfg, int episodes, int exact_samples, RngStream& rng) {
  std::vector<double> penalties, errors;
  Eigen::MatrixXd state_row(1, env.state_dim);

  for (int e = 0; e < episodes; ++e) {
    RngStream ep_rng = rng.substream(static_cast<std::uint64_t>(e));
    Eigen::VectorXd s = env.reset(ep_rng);
    for (int t = 0; t < env.horizon; ++t) {
      state_row.row(0) = s.transpose();
      const Eigen::VectorXd a =
          policy_mean_action(sac.actor, state_row, sac.cfg).row(0).transpose();
      const double r = env.reward(s, a);
      const Eigen::VectorXd s_next = env.step(s, a);
      const bool pick = ((t + 1) % 10 == 0) || (t + 1 == env.horizon);
      if (pick) {
        const int elite =
            model.elites[ep_rng.uniform_index(model.elites.size())];
        const DiagonalGaussian belief = predict(model, elite, s, a);
        Transition tr;
        tr.s = s;
        tr.a = a;
        tr.r = r;
        tr.s_next = belief.mean.head(env.state_dim);
        tr.s_next_sample = s_next;
        tr.done = env.terminal(s_next);
        tr.var_s_next = belief.variance.head(env.state_dim);
        tr.var_r = belief.variance(env.state_dim);

        double u = 0.0;
        switch (cfg.strategy) {
          case Strategy::Mopo: u = cfg.beta * penalty_mopo(tr); break;
          case Strategy::Mobile:
            u = cfg.beta * penalty_mobile(tr, sac, cfg.n_mc, ep_rng);
            break;
          case Strategy::Mombo: {
            RngStream action_rng = ep_rng.substream(77);
            Eigen::MatrixXd mean_row(1, env.state_dim);
            mean_row.row(0) = tr.s_next.transpose();
            PolicySample ps = policy_sample(sac.actor, mean_row, sac.cfg, action_rng);
            const Eigen::VectorXd a_next = ps.actions.row(0).transpose();
            u = target_mombo(tr, sac, 0.0, a_next) - target_mombo(tr, sac, cfg.beta, a_next);
            break;
          }
        }

        // Bellman error estimate at the realized next state: one-sample
        // target versus the exact_samples-average over policy draws.
        Eigen::MatrixXd next_rows(exact_samples, env.state_dim);
        for (int i = 0; i < exact_samples; ++i) next_rows.row(i) = s_next.transpose();
        RngStream exact_rng = ep_rng.substream(1000 + static_cast<std::uint64_t>(t));
        PolicySample ps = policy_sample(sac.actor, next_rows, sac.cfg, exact_rng);
        Eigen::MatrixXd input(exact_samples, env.state_dim + env.action_dim);
        input << next_rows, ps.actions;
        const Eigen::VectorXd q0 = forward_batch(sac.targets[0], input);
        const Eigen::VectorXd q1 = forward_batch(sac.targets[1], input);
        const Eigen::VectorXd q = q0.cwiseMin(q1);
        const double cont = tr.done ? 0.0 : 1.0;
        const double exact = r + cfg.gamma * cont * q.mean();
        const double sample = r + cfg.gamma * cont * q(0);
        penalties.push_back(u);
        errors.push_back(std::abs(exact - sample));
      }
      s = s_next;
      if (env.terminal(s)) break;
    }
  }

  UqResult result;
  const auto [acc, tight] = uq_scores(penalties, errors);
  result.accuracy = acc;
  result.tightness = tight;
  result.tuples = static_cast<int>(penalties.size());
  result.mean_penalty =
      std::accumulate(penalties.begin(), penalties.end(), 0.0) / penalties.size();
  result.mean_error = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  return result;
}

FigResult fig_mm_vs_mc(const MlpParams& critic, const DiagonalGaussian& belief,
                       const std::vector<int>& n_grid, int reps, int ref_samples,
                       RngStream& rng) {
  FigResult result;
  result.n_grid = n_grid;

  const MmForwardResult mm = mm_forward(critic, belief);
  result.mm_mean = mm.output.mean(0);
  result.mm_sigma = std::sqrt(mm.output.variance(0));

  RngStream ref_rng = rng.substream(0);
  const SampleBatch ref = mc_forward(critic, belief, ref_samples, ref_rng);
  const EmpiricalMoments ref_moments = empirical_moments(ref);
  result.mc_ref_mean = ref_moments.mean(0);
  result.mc_ref_stderr =
      std::sqrt((*ref_moments.variance)(0) / static_cast<double>(ref_samples));

  std::vector<double> log_n, log_var;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const int n = n_grid[gi];
    std::vector<double> means(reps);
    for (int rep = 0; rep < reps; ++rep) {
      RngStream rep_rng = rng.substream(1000 + gi * 10000 + static_cast<std::uint64_t>(rep));
      const SampleBatch batch = mc_forward(critic, belief, n, rep_rng);
      means[rep] = batch.samples.col(0).mean();
    }
    const double avg = std::accumulate(means.begin(), means.end(), 0.0) / reps;
    double var = 0.0;
    for (double m : means) var += (m - avg) * (m - avg);
    var /= std::max(1, reps - 1);
    result.mc_mean_avg.push_back(avg);
    result.mc_mean_std.push_back(std::sqrt(var));
    log_n.push_back(std::log(static_cast<double>(n)));
    log_var.push_back(std::log(std::max(var, 1e-300)));
  }

  // Least-squares slope of log var against log N.
  const double n_pts = static_cast<double>(log_n.size());
  const double mx = std::accumulate(log_n.begin(), log_n.end(), 0.0) / n_pts;
  const double my = std::accumulate(log_var.begin(), log_var.end(), 0.0) / n_pts;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    sxx += (log_n[i] - mx) * (log_n[i] - mx);
    sxy += (log_n[i] - mx) * (log_var[i] - my);
  }
  result.loglog_slope = sxy / sxx;
  return result;
}

SeedArtifacts seed_artifacts(const std::string& out_dir, const std::string& strategy,
                             std::uint64_t seed) {
  SeedArtifacts art;
  art.dir = out_dir + "/" + strategy + "/seed" + std::to_string(seed);
  art.dynamics = art.dir + "/dynamics.net";
  art.actor = art.dir + "/actor.net";
  art.critics = art.dir + "/critics.net";
  art.curve = art.dir + "/curve.csv";
  return art;
}

SacState load_sac(const SeedArtifacts& art, int state_dim, int action_dim,
                  const SacConfig& cfg) {
  RngStream dummy(0);
  SacState sac = make_sac(state_dim, action_dim, cfg, dummy);
  sac.actor = load_mlp(art.actor);
  std::vector<MlpParams> critic_nets = load_mlp_sections(art.critics);
  if (critic_nets.size() != 4)
    throw std::runtime_error("load_sac: expected 4 critic sections in " + art.critics);
  sac.critics = {critic_nets[0], critic_nets[1]};
  sac.targets = {critic_nets[2], critic_nets[3]};
  return sac;
}

void save_sac(const SeedArtifacts& art, const SacState& sac) {
  save_mlp(art.actor, sac.actor);
  save_mlp_sections(art.critics,
                    {sac.critics[0], sac.critics[1], sac.targets[0], sac.targets[1]});
}

CsvTable curve_to_csv(const std::vector<CurvePoint>& curve) {
  CsvTable table;
  table.header = {"step",          "eval_return_mean", "eval_return_std", "normalized_return",
                  "loss_critic",   "loss_actor",       "mean_penalty"};
  for (const auto& p : curve)
    table.rows.push_back({static_cast<double>(p.step), p.eval_return_mean, p.eval_return_std,
                          p.normalized_return, p.loss_critic, p.loss_actor, p.mean_penalty});
  return table;
}

std::vector<CurvePoint> curve_from_csv(const CsvTable& table) {
  std::vector<CurvePoint> curve;
  for (const auto& row : table.rows) {
    CurvePoint p;
    p.step = static_cast<long>(row[0]);
    p.eval_return_mean = row[1];
    p.eval_return_std = row[2];
    p.normalized_return = row[3];
    p.loss_critic = row[4];
    p.loss_actor = row[5];
    p.mean_penalty = row[6];
    curve.push_back(p);
  }
  return curve;
}

CsvTable aggregate_curves(const std::vector<CsvTable>& curves) {
  if (curves.empty()) throw std::invalid_argument("aggregate_curves: no curves");
  std::map<long, std::vector<double>> by_step;
  for (const auto& table : curves) {
    const int step_col = table.column("step");
    const int norm_col = table.column("normalized_return");
    if (step_col < 0 || norm_col < 0)
      throw std::invalid_argument("aggregate_curves: curve missing required columns");
    for (const auto& row : table.rows)
      by_step[static_cast<long>(row[step_col])].push_back(row[norm_col]);
  }
  CsvTable out;
  out.header = {"step", "normalized_mean", "normalized_std", "n_seeds"};
  for (const auto& [step, values] : by_step) {
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.size() > 1 ? var / (values.size() - 1) : 0.0;
    out.rows.push_back({static_cast<double>(step), mean, std::sqrt(var),
                        static_cast<double>(values.size())});
  }
  return out;
}

CsvTable bound_report_to_csv(const BoundReport& report,
                             const std::vector<std::pair<int, BoundReport>>& mc_grid) {
  const double nan = std::nan("");
  CsvTable table;
  table.header = {"row_kind", "layer", "norm", "g",        "c",
                  "n",        "mm_w1", "mc_w1", "mm_subopt", "mc_subopt"};
  // row_kind 0: per-layer entries (g/c empty for the output layer).
  for (std::size_t l = 0; l < report.layer_norm.size(); ++l) {
    const bool hidden = l < report.layer_g.size();
    table.rows.push_back({0.0, static_cast<double>(l + 1), report.layer_norm[l],
                          hidden ? report.layer_g[l] : nan, hidden ? report.layer_c[l] : nan,
                          nan, nan, nan, nan, nan});
  }
  // row_kind 1: totals per sampling budget.
  for (const auto& [n, rep] : mc_grid)
    table.rows.push_back({1.0, nan, nan, nan, nan, static_cast<double>(n), rep.mm_w1_bound,
                          rep.mc_w1_bound, rep.mm_subopt, rep.mc_subopt});
  return table;
}

namespace {

OfflineDataset obtain_dataset(const RunConfig& cfg, const ToyEnv& env, bool quiet) {
  if (!cfg.dataset_path.empty() && fs::exists(cfg.dataset_path))
    return load_dataset_jsonl(cfg.dataset_path);
  OfflineDataset dataset = generate_dataset(env, cfg.mix, cfg.dataset_size, cfg.dataset_seed);
  const std::string path =
      cfg.dataset_path.empty() ? cfg.out_dir + "/dataset.jsonl" : cfg.dataset_path;
  fs::create_directories(fs::path(path).parent_path());
  save_dataset_jsonl(path, dataset);
  if (!quiet) std::cout << "dataset: " << dataset.transitions.size() << " tuples -> " << path << "\n";
  return dataset;
}

}  // namespace

int cmd_gen_dataset(const RunConfig& cfg, bool quiet) {
  const ToyEnv env = make_env(cfg.env);
  fs::create_directories(cfg.out_dir);
  OfflineDataset dataset = generate_dataset(env, cfg.mix, cfg.dataset_size, cfg.dataset_seed);
  const std::string path =
      cfg.dataset_path.empty() ? cfg.out_dir + "/dataset.jsonl" : cfg.dataset_path;
  save_dataset_jsonl(path, dataset);
  if (!quiet) {
    double mean_r = 0.0;
    for (const auto& tr : dataset.transitions) mean_r += tr.r;
    std::cout << "wrote " << dataset.transitions.size() << " transitions to " << path
              << " (mean step reward " << mean_r / dataset.transitions.size() << ")\n";
  }
  return 0;
}

int cmd_train_dynamics(const RunConfig& cfg, bool quiet) {
  const ToyEnv env = make_env(cfg.env);
  fs::create_directories(cfg.out_dir);
  OfflineDataset dataset = obtain_dataset(cfg, env, quiet);
  for (std::uint64_t seed : cfg.seeds) {
    RngStream rng(seed, 100);
    EnsembleModel model = train_ensemble(dataset.transitions, cfg.ensemble, rng);
    const std::string path = cfg.out_dir + "/dynamics_seed" + std::to_string(seed) + ".net";
    save_ensemble(path, model);
    if (!quiet) {
      std::cout << "seed " << seed << ": dynamics -> " << path << " (val NLL";
      for (double nll : model.val_nll) std::cout << " " << nll;
      std::cout << ")\n";
    }
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, bool quiet) {
  const ToyEnv env = make_env(cfg.env);
  fs::create_directories(cfg.out_dir);
  dump_run_config(cfg, cfg.out_dir + "/config.json");
  OfflineDataset dataset = obtain_dataset(cfg, env, quiet);

  struct SeedOutcome {
    std::uint64_t seed;
    TrainResult result;
  };
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> failures(cfg.seeds.size());

  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    workers.emplace_back([&, i]() {
      try {
        const std::uint64_t seed = cfg.seeds[i];
        SeedArtifacts art = seed_artifacts(cfg.out_dir, cfg.strategy, seed);
        fs::create_directories(art.dir);

        EnsembleModel model;
        if (!cfg.dynamics_path.empty()) {
          model = load_ensemble(cfg.dynamics_path);
        } else {
          RngStream dyn_rng(seed, 100);
          model = train_ensemble(dataset.transitions, cfg.ensemble, dyn_rng);
        }
        save_ensemble(art.dynamics, model);

        RngStream sac_rng(seed, 200);
        SacState sac = make_sac(env.state_dim, env.action_dim, cfg.sac, sac_rng);
        PenaltyConfig pen = cfg.penalty;
        pen.strategy = strategy_from_string(cfg.strategy);
        RngStream train_rng(seed, 300);
        TrainResult result =
            train_policy(dataset.transitions, model, env, sac, pen, cfg.train, train_rng);

        save_sac(art, sac);
        write_csv(art.curve, curve_to_csv(result.curve));
        outcomes[i] = {seed, std::move(result)};
      } catch (...) {
        failures[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);

  std::vector<CsvTable> curves;
  nlohmann::ordered_json metrics;
  metrics["strategy"] = cfg.strategy;
  metrics["env"] = cfg.env;
  for (const auto& outcome : outcomes) {
    curves.push_back(curve_to_csv(outcome.result.curve));
    nlohmann::ordered_json per_seed;
    per_seed["seed"] = outcome.seed;
    per_seed["aulc"] = outcome.result.aulc;
    per_seed["final_normalized"] = outcome.result.final_normalized;
    per_seed["steps_run"] = outcome.result.steps_run;
    metrics["seeds"].push_back(per_seed);
    if (!quiet)
      std::cout << cfg.strategy << " seed " << outcome.seed << ": final normalized "
                << outcome.result.final_normalized << " (AULC " << outcome.result.aulc
                << ", steps " << outcome.result.steps_run << ")\n";
  }
  const std::string strat_dir = cfg.out_dir + "/" + cfg.strategy;
  write_csv(strat_dir + "/aggregate.csv", aggregate_curves(curves));
  std::ofstream metrics_out(strat_dir + "/metrics.json");
  metrics_out << metrics.dump(2) << "\n";
  return 0;
}

int cmd_eval_uq(const RunConfig& cfg, bool quiet) {
  const ToyEnv env = make_env(cfg.env);
  CsvTable table;
  table.header = {"strategy", "seed", "accuracy", "tightness", "mean_penalty", "mean_error",
                  "tuples"};
  const std::vector<std::string> strategies = {"mopo", "mobile", "mombo"};
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    const std::string& strategy = strategies[si];
    for (std::uint64_t seed : cfg.seeds) {
      SeedArtifacts art = seed_artifacts(cfg.out_dir, strategy, seed);
      if (!fs::exists(art.actor)) continue;
      SacState sac = load_sac(art, env.state_dim, env.action_dim, cfg.sac);
      EnsembleModel model = load_ensemble(art.dynamics);
      PenaltyConfig pen = cfg.penalty;
      pen.strategy = strategy_from_string(strategy);
      RngStream rng(seed, 400);
      UqResult r = evaluate_uq(env, sac, model, pen, 10, 1000, rng);
      table.rows.push_back({static_cast<double>(si), static_cast<double>(seed), r.accuracy,
                            r.tightness, r.mean_penalty, r.mean_error,
                            static_cast<double>(r.tuples)});
      if (!quiet)
        std::cout << strategy << " seed " << seed << ": accuracy " << r.accuracy
                  << " tightness " << r.tightness << "\n";
    }
  }
  if (table.rows.empty())
    throw std::runtime_error(
        "cmd_eval_uq: no trained artifacts found under " + cfg.out_dir +
        " (run the train command first)");
  fs::create_directories(cfg.out_dir);
  write_csv(cfg.out_dir + "/uq_metrics.csv", table);
  return 0;
}

int cmd_fig_mm_vs_mc(const RunConfig& cfg, bool quiet) {
  const ToyEnv env = make_env(cfg.env);
  fs::create_directories(cfg.out_dir);

  MlpParams critic;
  DiagonalGaussian belief;
  SeedArtifacts art = seed_artifacts(cfg.out_dir, cfg.strategy, cfg.seeds.front());
  if (!cfg.checkpoint_path.empty()) {
    if (!fs::exists(cfg.checkpoint_path))
      throw std::runtime_error("cmd_fig_mm_vs_mc: checkpoint not found: " + cfg.checkpoint_path +
                               " (train first or drop checkpoint_path to build a tiny fixture)");
    critic = load_mlp(cfg.checkpoint_path);
    if (cfg.belief_mean.empty())
      throw std::runtime_error("cmd_fig_mm_vs_mc: belief_mean required with checkpoint_path");
    belief.mean = Eigen::Map<const Eigen::VectorXd>(cfg.belief_mean.data(),
                                                    static_cast<Eigen::Index>(cfg.belief_mean.size()));
    belief.variance = Eigen::Map<const Eigen::VectorXd>(
        cfg.belief_var.data(), static_cast<Eigen::Index>(cfg.belief_var.size()));
  } else {
    // Tiny fixture: short MOMBO training on a small generated dataset.
    RunConfig tiny = cfg;
    tiny.dataset_size = std::min(cfg.dataset_size, 4000);
    tiny.seeds = {cfg.seeds.front()};
    tiny.train.steps = std::min<long>(cfg.train.steps, 3000);
    tiny.train.stop_at_normalized = -1.0;
    OfflineDataset dataset = obtain_dataset(tiny, env, quiet);
    RngStream dyn_rng(tiny.seeds[0], 100);
    EnsembleModel model = train_ensemble(dataset.transitions, tiny.ensemble, dyn_rng);
    RngStream sac_rng(tiny.seeds[0], 200);
    SacState sac = make_sac(env.state_dim, env.action_dim, tiny.sac, sac_rng);
    PenaltyConfig pen = tiny.penalty;
    RngStream train_rng(tiny.seeds[0], 300);
    train_policy(dataset.transitions, model, env, sac, pen, tiny.train, train_rng);

    critic = sac.critics[0];
    // Belief over (s', a') at a dataset state-action, action at the mean.
    const Transition& tr = dataset.transitions[dataset.transitions.size() / 2];
    const DiagonalGaussian pred = predict(model, model.elites[0], tr.s, tr.a);
    DiagonalGaussian next_state{pred.mean.head(env.state_dim),
                                pred.variance.head(env.state_dim)};
    Eigen::MatrixXd row(1, env.state_dim);
    row.row(0) = next_state.mean.transpose();
    const Eigen::MatrixXd a_next = policy_mean_action(sac.actor, row, sac.cfg);
    belief = concat_beliefs(next_state, point_mass(a_next.row(0).transpose()));
  }

  RngStream rng(cfg.seeds.front(), 500);
  FigResult fig = fig_mm_vs_mc(critic, belief, cfg.mc_grid, cfg.fig_reps, cfg.fig_ref_samples,
                               rng);

  CsvTable table;
  table.header = {"n", "mc_mean_avg", "mc_mean_std", "mm_mean", "mm_sigma"};
  for (std::size_t i = 0; i < fig.n_grid.size(); ++i)
    table.rows.push_back({static_cast<double>(fig.n_grid[i]), fig.mc_mean_avg[i],
                          fig.mc_mean_std[i], fig.mm_mean, fig.mm_sigma});
  write_csv(cfg.out_dir + "/fig_mm_vs_mc.csv", table);

  nlohmann::ordered_json summary;
  summary["mm_mean"] = fig.mm_mean;
  summary["mm_sigma"] = fig.mm_sigma;
  summary["mc_ref_mean"] = fig.mc_ref_mean;
  summary["mc_ref_stderr"] = fig.mc_ref_stderr;
  summary["loglog_slope"] = fig.loglog_slope;
  std::ofstream summary_out(cfg.out_dir + "/fig_mm_vs_mc.json");
  summary_out << summary.dump(2) << "\n";

  // Overlaid densities of the mean estimators and the MM output.
  SvgPlot plot("Moment matching vs Monte Carlo", "next value", "density");
  auto density_curve = [](double mean, double sigma, std::vector<double>& xs,
                          std::vector<double>& ys) {
    xs.clear();
    ys.clear();
    const double lo = mean - 4 * sigma, hi = mean + 4 * sigma;
    for (int i = 0; i <= 160; ++i) {
      const double x = lo + (hi - lo) * i / 160.0;
      const double z = (x - mean) / sigma;
      xs.push_back(x);
      ys.push_back(std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * M_PI)));
    }
  };
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < fig.n_grid.size(); ++i) {
    if (fig.mc_mean_std[i] <= 0) continue;
    density_curve(fig.mc_mean_avg[i], fig.mc_mean_std[i], xs, ys);
    plot.add_series("MC mean, N=" + std::to_string(fig.n_grid[i]), xs, ys);
  }
  density_curve(fig.mm_mean, std::max(fig.mm_sigma, 1e-12), xs, ys);
  plot.add_series("MM output", xs, ys);
  plot.write(cfg.out_dir + "/fig_mm_vs_mc.svg");

  if (!quiet)
    std::cout << "MM mean " << fig.mm_mean << " sigma " << fig.mm_sigma << "; MC ref "
              << fig.mc_ref_mean << " +- " << fig.mc_ref_stderr << "; var slope "
              << fig.loglog_slope << "\n";
  return 0;
}

int cmd_bounds(const RunConfig& cfg, bool quiet) {
  if (cfg.checkpoint_path.empty())
    throw std::runtime_error("cmd_bounds: checkpoint_path is required");
  if (!fs::exists(cfg.checkpoint_path))
    throw std::runtime_error("cmd_bounds: checkpoint not found: " + cfg.checkpoint_path);
  if (cfg.belief_mean.empty() || cfg.belief_mean.size() != cfg.belief_var.size())
    throw std::runtime_error("cmd_bounds: belief_mean/belief_var must be non-empty and equal length");
  const MlpParams net = load_mlp(cfg.checkpoint_path);
  DiagonalGaussian belief;
  belief.mean = Eigen::Map<const Eigen::VectorXd>(cfg.belief_mean.data(),
                                                  static_cast<Eigen::Index>(cfg.belief_mean.size()));
  belief.variance = Eigen::Map<const Eigen::VectorXd>(
      cfg.belief_var.data(), static_cast<Eigen::Index>(cfg.belief_var.size()));

  const MmForwardResult mm = mm_forward(net, belief);
  std::vector<std::pair<int, BoundReport>> grid;
  for (int n : cfg.bounds_n_grid)
    grid.emplace_back(n, suboptimality_bounds(net, mm.trace, cfg.penalty.horizon, n,
                                              cfg.penalty.delta, cfg.penalty.rmax,
                                              cfg.penalty.gamma));
  fs::create_directories(cfg.out_dir);
  const BoundReport& base = grid.front().second;
  write_csv(cfg.out_dir + "/bounds.csv", bound_report_to_csv(base, grid));
  if (!quiet) {
    std::cout << "mm_w1 " << base.mm_w1_bound << " mm_subopt " << base.mm_subopt << "\n";
    for (const auto& [n, rep] : grid)
      std::cout << "  N=" << n << ": mc_subopt " << rep.mc_subopt
                << (rep.mm_subopt < rep.mc_subopt ? "  (mm tighter)" : "") << "\n";
    if (base.g_unit_above_one) std::cout << "note: a per-unit G value exceeded 1\n";
  }
  return 0;
}

int cmd_aggregate(const RunConfig& cfg, const std::vector<std::string>& curve_files,
                  bool quiet) {
  if (curve_files.empty()) throw std::runtime_error("cmd_aggregate: no curve files given");
  std::vector<CsvTable> curves;
  for (const auto& path : curve_files) curves.push_back(read_csv(path));
  fs::create_directories(cfg.out_dir);
  const CsvTable agg = aggregate_curves(curves);
  write_csv(cfg.out_dir + "/aggregate.csv", agg);
  if (!quiet) std::cout << "aggregated " << curves.size() << " curves\n";
  return 0;
}

}  // namespace mombo
