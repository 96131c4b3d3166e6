#pragma once

#include <string>
#include <vector>

#include "mombo/dynamics.hpp"
#include "mombo/envs.hpp"
#include "mombo/sac.hpp"
#include "mombo/transition.hpp"

namespace mombo {

enum class Strategy { Mopo, Mobile, Mombo };

Strategy strategy_from_string(const std::string& name);
std::string strategy_name(Strategy s);

struct PenaltyConfig {
  Strategy strategy = Strategy::Mombo;
  double beta = 2.0;
  int n_mc = 10;  // MOBILE sample count, >= 2
  double gamma = 0.99;
  double rmax = 1.0;
  double horizon = 100.0;
  double delta = 0.1;
};

/// Sample Bellman operator r + gamma (1 - done) min_k targetQ(s', a') with a'
/// drawn from the policy at the realized next state. No entropy term.
double sample_bellman(const Transition& tr, const SacState& sac, RngStream& rng);
double sample_bellman(const Transition& tr, const SacState& sac, const Eigen::VectorXd& a_next);

/// MOPO penalty: max over dimensions of the predictive next-state std.
double penalty_mopo(const Transition& tr);

/// MOBILE penalty: empirical standard deviation over n draws of the sample
/// Bellman target with next states resampled from the stored predictive
/// Gaussian. One action-noise draw is shared across the n next states so the
/// penalty vanishes exactly at zero variance.
double penalty_mobile(const Transition& tr, const SacState& sac, int n, RngStream& rng);

/// MOMBO pessimistic target: propagate the next-state belief through each
/// target critic by moment matching, form per-critic lower confidence bounds
/// gamma*mu - beta*gamma*sigma, take the min, and subtract the reward
/// uncertainty: r + (1-done) min_k LCB_k - beta sqrt(var_r). Deterministic
/// given the next action.
double target_mombo(const Transition& tr, const SacState& sac, double beta,
                    const Eigen::VectorXd& a_next);
double target_mombo(const Transition& tr, const SacState& sac, double beta, RngStream& rng);

struct UpdateLosses {
  double critic = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
  double mean_penalty = 0.0;
};

/// One pessimistic TD step on both critics toward the strategy target,
/// followed by the tau soft update of the target networks. Targets are
/// stop-gradient by construction (they only read the target networks).
UpdateLosses critic_update(const std::vector<const Transition*>& batch, SacState& sac,
                           const PenaltyConfig& cfg, RngStream& rng);

/// Reparameterized SAC actor step on min-critic values with entropy
/// temperature update toward the target entropy (skipped in fixed-alpha mode).
UpdateLosses actor_update(const std::vector<const Transition*>& batch, SacState& sac,
                          RngStream& rng);

struct TrainConfig {
  long steps = 100000;
  long eval_interval = 1000;
  int eval_episodes = 10;
  long rollout_freq = 1000;
  int rollout_batch = 1000;
  int rollout_k = 5;
  int retain_rollouts = 5;  // synthetic buffer capacity in rollout refreshes
  double stop_at_normalized = -1.0;  // early stop threshold; negative disables
};

struct CurvePoint {
  long step = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double normalized_return = 0.0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double mean_penalty = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double aulc = 0.0;
  double final_normalized = 0.0;
  long steps_run = 0;
  std::size_t max_synthetic_buffer = 0;
};

/// Mean of the per-checkpoint normalized returns.
double aulc(const std::vector<CurvePoint>& curve);

/// Dyna-style loop: refresh the synthetic buffer from model rollouts every
/// rollout_freq steps (keeping the last retain_rollouts refreshes), then per
/// gradient step mix real_ratio real and 1 - real_ratio synthetic tuples for
/// the critic and actor updates, evaluating on the true environment at the
/// eval cadence.
TrainResult train_policy(const std::vector<Transition>& real_data, const EnsembleModel& model,
                         const ToyEnv& env, SacState& sac, const PenaltyConfig& cfg,
                         const TrainConfig& tc, RngStream& rng);

/// Evaluation rollouts with the deterministic mean action.
std::pair<double, double> evaluate_policy(const ToyEnv& env, const SacState& sac, int episodes,
                                          RngStream& rng);

}  // namespace mombo
