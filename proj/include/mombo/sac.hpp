#pragma once

#include <Eigen/Dense>
#include <array>

#include "mombo/adam.hpp"
#include "mombo/mlp.hpp"
#include "mombo/rng.hpp"

namespace mombo {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  int batch = 256;
  double lr_actor = 1e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 1e-4;
  std::vector<int> hidden_actor = {64, 64};
  std::vector<int> hidden_critic = {64, 64};
  double real_ratio = 0.05;
  bool learn_alpha = true;      // fixed-alpha mode skips the temperature update
  double alpha_init = 0.2;
  double target_entropy = -1.0; // set to -dim(A) by make_sac
  double logstd_min = -20.0;
  double logstd_max = 2.0;
};

/// Twin critics with target copies and a squashed-Gaussian actor.
struct SacState {
  MlpParams actor;
  std::array<MlpParams, 2> critics;
  std::array<MlpParams, 2> targets;  // initialized as copies of the critics
  AdamState opt_actor;
  std::array<AdamState, 2> opt_critics;
  double log_alpha = 0.0;
  ScalarAdam opt_alpha;
  SacConfig cfg;
  int state_dim = 0;
  int action_dim = 0;

  double alpha() const;
};

SacState make_sac(int state_dim, int action_dim, const SacConfig& cfg, RngStream& rng);

/// Reparameterized tanh-squashed Gaussian sample with everything needed for
/// the analytic backward pass. The raw head output is [mean, raw log-std];
/// the log-std is hard-clamped into [logstd_min, logstd_max].
struct PolicySample {
  Eigen::MatrixXd actions;   // tanh(u), n x adim
  Eigen::VectorXd log_prob;  // per row, tanh-corrected
  Eigen::MatrixXd sigma;     // exp(clamped log-std)
  Eigen::MatrixXd eps;       // the standard-normal draws
  Eigen::MatrixXd raw_logstd;
  ForwardTape tape;
};

PolicySample policy_sample(const MlpParams& actor, const Eigen::MatrixXd& states,
                           const SacConfig& cfg, RngStream& rng);

/// Deterministic evaluation action tanh(mean).
Eigen::MatrixXd policy_mean_action(const MlpParams& actor, const Eigen::MatrixXd& states,
                                   const SacConfig& cfg);

/// Backpropagates d(loss)/d(actions) and per-row log-prob weights through the
/// sample into actor gradients:
///   loss = sum_i logp_weight_i * log_prob_i + sum_{i,d} grad_actions(i,d) * a(i,d).
MlpGrads policy_backward(const MlpParams& actor, const SacConfig& cfg, const PolicySample& ps,
                         const Eigen::VectorXd& logp_weight, const Eigen::MatrixXd& grad_actions);

/// Log-density of the squashed action tanh(u) for scalar mean/std; the
/// change-of-variables reference used by the tests.
double squashed_logprob_scalar(double u, double mean, double stddev);

/// In-place soft update target <- tau * net + (1 - tau) * target.
void soft_update(const MlpParams& net, MlpParams& target, double tau);

}  // namespace mombo
