#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mombo/rng.hpp"
#include "mombo/transition.hpp"

namespace mombo {

/// Deterministic toy continuous-control environment with bounded rewards in
/// [0, rmax] and measured random/expert return fixtures.
struct ToyEnv {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  double action_low = -1.0;
  double action_high = 1.0;
  int horizon = 100;
  double rmax = 1.0;
  double return_random = 0.0;  // measured baseline fixtures
  double return_expert = 0.0;

  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> step;
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> reward;
  std::function<bool(const Eigen::VectorXd&)> terminal;
  std::function<Eigen::VectorXd(RngStream&)> reset;
  /// Reference near-optimal controller (unclipped output; callers clip).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> pd_action;
};

/// Known environments: "linereach", "pendulite". Unknown names raise
/// std::invalid_argument listing the valid ones.
ToyEnv make_env(const std::string& name);
std::vector<std::string> env_names();

/// 100 * (raw - R_rand) / (R_exp - R_rand).
double normalized_return(const ToyEnv& env, double raw_return);

/// Undiscounted return of one episode under the given policy.
double rollout_return(const ToyEnv& env,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>& policy,
                      RngStream& rng);

struct DatasetMeta {
  std::string env;
  std::string mix;       // "random" | "medium" | "expert" | decimal expert ratio
  double ratio = 0.0;    // expert-episode fraction for mixed datasets
  int size = 0;
  std::uint64_t seed = 0;
  std::string policies;  // descriptor of the generating behavior policies
};

struct OfflineDataset {
  std::vector<Transition> transitions;
  DatasetMeta meta;
};

/// Behavior tiers: random = uniform actions, medium = PD + N(0, 0.3) action
/// noise, expert = PD + N(0, 0.05). A numeric mix in [0, 1] interleaves
/// expert and random episodes at that expert fraction.
OfflineDataset generate_dataset(const ToyEnv& env, const std::string& mix, int size,
                                std::uint64_t seed);

/// JSON-lines format: first line {"meta": {...}}, then one transition per
/// line with keys s, a, r, s_next, done, var_s_next, var_r. Numbers carry 17
/// significant digits; all-zero variances are written as the scalar 0.
void save_dataset_jsonl(const std::string& path, const OfflineDataset& dataset);
OfflineDataset load_dataset_jsonl(const std::string& path);

}  // namespace mombo
