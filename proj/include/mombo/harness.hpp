#pragma once

#include <string>
#include <vector>

#include "mombo/bounds.hpp"
#include "mombo/csv.hpp"
#include "mombo/dynamics.hpp"
#include "mombo/envs.hpp"
#include "mombo/pevi.hpp"

namespace mombo {

/// Full knob set for one experiment run; serialized to JSON and dumped into
/// the output directory for provenance.
struct RunConfig {
  std::string env = "linereach";
  std::string strategy = "mombo";
  std::string mix = "0.1";
  int dataset_size = 20000;
  std::uint64_t dataset_seed = 0;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "out";
  std::string dataset_path;   // generated under out_dir when empty
  std::string dynamics_path;  // trained per seed when empty
  std::string checkpoint_path;  // cmd_bounds / fig input net

  PenaltyConfig penalty;
  SacConfig sac;
  EnsembleConfig ensemble;
  TrainConfig train;

  // fig-mm-vs-mc
  std::vector<int> mc_grid = {10, 100, 1000, 10000};
  int fig_reps = 100;
  int fig_ref_samples = 100000;

  // bounds
  std::vector<double> belief_mean;
  std::vector<double> belief_var;
  std::vector<int> bounds_n_grid = {4, 10, 100, 1000, 10000};
};

RunConfig run_config_from_json(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);
void dump_run_config(const RunConfig& cfg, const std::string& path);

/// Uncertainty-quantifier scores: accuracy = mean 1(U >= err),
/// tightness = mean(U - err).
std::pair<double, double> uq_scores(const std::vector<double>& penalties,
                                    const std::vector<double>& errors);

/// Debug serialization of a moment-matching trace: one row per (stage, unit).
CsvTable trace_to_csv(const PropagationTrace& trace);

struct UqResult {
  double accuracy = 0.0;
  double tightness = 0.0;
  double mean_penalty = 0.0;
  double mean_error = 0.0;
  int tuples = 0;
};

/// Rolls evaluation episodes in the true environment with the trained policy,
/// selects tuples at every 10th step (final step included), computes the
/// strategy penalty U(s,a) from the learned model and compares it against the
/// Bellman-operator error estimated with `exact_samples` policy draws at the
/// realized next state.
UqResult evaluate_uq(const ToyEnv& env, const SacState& sac, const EnsembleModel& model,
                     const PenaltyConfig& cfg, int episodes, int exact_samples, RngStream& rng);

/// Per-run evaluation summary. The AULC always equals the mean of the
/// checkpoint normalized returns and accuracy lies in [0, 1].
struct MetricsReport {
  std::vector<double> checkpoint_normalized;
  double aulc = 0.0;
  double final_return = 0.0;
  double accuracy = 0.0;
  double tightness = 0.0;
  double penalty_mean = 0.0;
  double penalty_std = 0.0;
};

MetricsReport make_metrics_report(const TrainResult& train, const UqResult& uq);

struct FigResult {
  std::vector<int> n_grid;
  std::vector<double> mc_mean_avg;  // across repetitions
  std::vector<double> mc_mean_std;
  double mm_mean = 0.0;
  double mm_sigma = 0.0;
  double mc_ref_mean = 0.0;
  double mc_ref_stderr = 0.0;
  double loglog_slope = 0.0;  // of var(mean estimator) against N
};

/// Moment matching versus Monte Carlo comparison for the scalar critic value
/// of a fixed input belief.
FigResult fig_mm_vs_mc(const MlpParams& critic, const DiagonalGaussian& belief,
                       const std::vector<int>& n_grid, int reps, int ref_samples,
                       RngStream& rng);

/// Per-seed training artifacts live in <out>/<strategy>/seed<K>/.
struct SeedArtifacts {
  std::string dir;
  std::string dynamics;  // dynamics.net
  std::string actor;     // actor.net
  std::string critics;   // critics.net, sections [c0, c1, t0, t1]
  std::string curve;     // curve.csv
};
SeedArtifacts seed_artifacts(const std::string& out_dir, const std::string& strategy,
                             std::uint64_t seed);

/// Reassembles a SacState from saved actor/critic sections.
SacState load_sac(const SeedArtifacts& art, int state_dim, int action_dim,
                  const SacConfig& cfg);
void save_sac(const SeedArtifacts& art, const SacState& sac);

// CLI commands. Each returns 0 on success and throws on failure.
int cmd_gen_dataset(const RunConfig& cfg, bool quiet);
int cmd_train_dynamics(const RunConfig& cfg, bool quiet);
int cmd_train(const RunConfig& cfg, bool quiet);
int cmd_eval_uq(const RunConfig& cfg, bool quiet);
int cmd_fig_mm_vs_mc(const RunConfig& cfg, bool quiet);
int cmd_bounds(const RunConfig& cfg, bool quiet);
int cmd_aggregate(const RunConfig& cfg, const std::vector<std::string>& curve_files, bool quiet);

/// Mean/std aggregation of per-seed learning curves keyed by step.
CsvTable aggregate_curves(const std::vector<CsvTable>& curves);

CsvTable curve_to_csv(const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> curve_from_csv(const CsvTable& table);

CsvTable bound_report_to_csv(const BoundReport& report,
                             const std::vector<std::pair<int, BoundReport>>& mc_grid);

}  // namespace mombo
