#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mombo/gaussmm.hpp"
#include "mombo/mlp.hpp"
#include "mombo/rng.hpp"
#include "mombo/transition.hpp"

namespace mombo {

struct EnsembleConfig {
  int n_members = 5;
  int n_elites = 3;
  std::vector<int> hidden = {64, 64};
  double lr = 1e-3;
  int batch = 256;
  double logvar_min = -10.0;
  double logvar_max = 0.5;
  std::vector<double> weight_decay = {2.5e-5, 5e-5, 1e-4};  // per layer
  int early_stop_patience = 5;
  int max_epochs = 200;
  int val_size = 1000;  // capped at 20% of the data
};

struct Normalization {
  Eigen::VectorXd in_mean, in_std;    // over (s, a)
  Eigen::VectorXd out_mean, out_std;  // over (delta s, r)
};

/// Heteroscedastic Gaussian ensemble over (next-state delta, reward). Member
/// networks map the normalized (s, a) to [mean, log-variance] pairs; the
/// log-variance is soft-clamped into [logvar_min, logvar_max].
struct EnsembleModel {
  std::vector<MlpParams> members;
  std::vector<int> elites;          // sorted by validation NLL, ties to lower index
  std::vector<double> val_nll;      // best validation NLL per member
  Normalization norm;
  EnsembleConfig cfg;
  int state_dim = 0;
  int action_dim = 0;
};

using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>;
using TerminalFn = std::function<bool(const Eigen::VectorXd&)>;

/// Maximum-likelihood training of every member on (delta s, r) targets with
/// per-layer L2 weight decay, early stopping on validation NLL (patience 5
/// evaluations, best snapshot restored) and elite selection.
EnsembleModel train_ensemble(const std::vector<Transition>& data, const EnsembleConfig& cfg,
                             RngStream& rng);

/// Predictive belief over (s', r) for one elite member, denormalized.
/// Non-elite indices are rejected.
DiagonalGaussian predict(const EnsembleModel& model, int member, const Eigen::VectorXd& s,
                         const Eigen::VectorXd& a);

/// Per-sample Gaussian negative log-likelihood of (delta s, r) targets under
/// one member; the validation criterion.
double member_nll(const EnsembleModel& model, const MlpParams& member,
                  const Eigen::MatrixXd& inputs_norm, const Eigen::MatrixXd& targets_norm);

/// k-step synthetic rollouts: per start, sample actions from the policy, pick
/// an elite uniformly at random, draw (s', r) from its predictive Gaussian
/// and store the transition with the elite's predictive variances. Branches
/// stop at k steps or when `terminal` fires on the sampled next state.
std::vector<Transition> rollout(const EnsembleModel& model, const PolicyFn& policy,
                                const std::vector<Eigen::VectorXd>& starts, int k,
                                RngStream& rng, const TerminalFn& terminal = nullptr);

/// Checkpoints: net container with one section per member plus a JSON sidecar
/// (normalization stats, elites, config) at path + ".json".
void save_ensemble(const std::string& path, const EnsembleModel& model);
EnsembleModel load_ensemble(const std::string& path);

}  // namespace mombo
