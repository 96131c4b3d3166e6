#include "mombo/pevi.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "mombo/gaussmm.hpp"

namespace mombo {

Strategy strategy_from_string(const std::string& name) {
  if (name == "mopo" || name == "MOPO") return Strategy::Mopo;
  if (name == "mobile" || name == "MOBILE") return Strategy::Mobile;
  if (name == "mombo" || name == "MOMBO") return Strategy::Mombo;
  throw std::invalid_argument("unknown strategy '" + name + "'; valid: mopo, mobile, mombo");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Mopo: return "mopo";
    case Strategy::Mobile: return "mobile";
    case Strategy::Mombo: return "mombo";
  }
  return "?";
}

namespace {

/// Min over the two target critics for a batch of (state, action) rows.
Eigen::VectorXd min_target_q(const SacState& sac, const Eigen::MatrixXd& states,
                             const Eigen::MatrixXd& actions) {
  Eigen::MatrixXd input(states.rows(), states.cols() + actions.cols());
  input << states, actions;
  const Eigen::VectorXd q0 = forward_batch(sac.targets[0], input);
  const Eigen::VectorXd q1 = forward_batch(sac.targets[1], input);
  return q0.cwiseMin(q1);
}

Eigen::VectorXd sample_next_actions(const SacState& sac, const Eigen::MatrixXd& states,
                                    RngStream& rng, Eigen::MatrixXd& actions_out) {
  PolicySample ps = policy_sample(sac.actor, states, sac.cfg, rng);
  actions_out = ps.actions;
  return ps.log_prob;
}

}  // namespace

double sample_bellman(const Transition& tr, const SacState& sac, const Eigen::VectorXd& a_next) {
  Eigen::MatrixXd s(1, tr.s_next_sample.size());
  s.row(0) = tr.s_next_sample.transpose();
  Eigen::MatrixXd a(1, a_next.size());
  a.row(0) = a_next.transpose();
  const double q = min_target_q(sac, s, a)(0);
  const double cont = tr.done ? 0.0 : 1.0;
  return tr.r + sac.cfg.gamma * cont * q;
}

double sample_bellman(const Transition& tr, const SacState& sac, RngStream& rng) {
  Eigen::MatrixXd s(1, tr.s_next_sample.size());
  s.row(0) = tr.s_next_sample.transpose();
  Eigen::MatrixXd a;
  sample_next_actions(sac, s, rng, a);
  return sample_bellman(tr, sac, a.row(0).transpose());
}

double penalty_mopo(const Transition& tr) {
  if (tr.var_s_next.size() == 0) return 0.0;
  return tr.var_s_next.cwiseSqrt().maxCoeff();
}

double penalty_mobile(const Transition& tr, const SacState& sac, int n, RngStream& rng) {
  if (n < 2) throw std::invalid_argument("penalty_mobile: needs at least two samples");
  const int sdim = static_cast<int>(tr.s_next.size());
  const Eigen::VectorXd stddev = tr.var_s_next.cwiseSqrt();

  // One shared action-noise draw: the penalty quantifies next-state
  // uncertainty only, and collapses to zero at zero variance.
  Eigen::MatrixXd next_states(n, sdim);
  for (int j = 0; j < n; ++j)
    for (int d = 0; d < sdim; ++d)
      next_states(j, d) = tr.s_next(d) + stddev(d) * rng.normal();

  const Eigen::MatrixXd raw = forward_batch(sac.actor, next_states);
  const int adim = static_cast<int>(raw.cols()) / 2;
  Eigen::VectorXd action_eps(adim);
  for (int c = 0; c < adim; ++c) action_eps(c) = rng.normal();

  Eigen::MatrixXd actions(n, adim);
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < adim; ++c) {
      const double logstd = std::clamp(raw(j, adim + c), sac.cfg.logstd_min, sac.cfg.logstd_max);
      actions(j, c) = std::tanh(raw(j, c) + std::exp(logstd) * action_eps(c));
    }

  const Eigen::VectorXd q = min_target_q(sac, next_states, actions);
  const double cont = tr.done ? 0.0 : 1.0;
  Eigen::VectorXd targets = (sac.cfg.gamma * cont * q).array() + tr.r;
  const double mean = targets.mean();
  const double var = (targets.array() - mean).square().sum() / double(n - 1);
  return std::sqrt(std::max(0.0, var));
}

double target_mombo(const Transition& tr, const SacState& sac, double beta,
                    const Eigen::VectorXd& a_next) {
  const int sdim = static_cast<int>(tr.s_next.size());
  const int adim = static_cast<int>(a_next.size());
  Eigen::MatrixXd mean(1, sdim + adim), var(1, sdim + adim);
  mean.row(0).head(sdim) = tr.s_next.transpose();
  mean.row(0).tail(adim) = a_next.transpose();
  var.row(0).head(sdim) = tr.var_s_next.transpose();
  var.row(0).tail(adim).setZero();

  double min_lcb = 0.0;
  for (int k = 0; k < 2; ++k) {
    Eigen::MatrixXd out_mean, out_var;
    mm_forward_batch(sac.targets[k], mean, var, out_mean, out_var);
    const double mu = out_mean(0, 0);
    const double sigma = std::sqrt(std::max(0.0, out_var(0, 0)));
    const double lcb = sac.cfg.gamma * mu - beta * sac.cfg.gamma * sigma;
    min_lcb = (k == 0) ? lcb : std::min(min_lcb, lcb);
  }
  const double cont = tr.done ? 0.0 : 1.0;
  return tr.r + cont * min_lcb - beta * std::sqrt(std::max(0.0, tr.var_r));
}

double target_mombo(const Transition& tr, const SacState& sac, double beta, RngStream& rng) {
  Eigen::MatrixXd s(1, tr.s_next.size());
  s.row(0) = tr.s_next.transpose();
  Eigen::MatrixXd a;
  sample_next_actions(sac, s, rng, a);
  return target_mombo(tr, sac, beta, a.row(0).transpose());
}

namespace {

struct BatchViews {
  Eigen::MatrixXd s, a, s_next_sample, s_next_mean, var_s;
  Eigen::VectorXd r, cont, var_r;
};

BatchViews assemble(const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw std::invalid_argument("assemble: empty batch");
  const int n = static_cast<int>(batch.size());
  const int sdim = static_cast<int>(batch[0]->s.size());
  const int adim = static_cast<int>(batch[0]->a.size());
  BatchViews v;
  v.s.resize(n, sdim);
  v.a.resize(n, adim);
  v.s_next_sample.resize(n, sdim);
  v.s_next_mean.resize(n, sdim);
  v.var_s.resize(n, sdim);
  v.r.resize(n);
  v.cont.resize(n);
  v.var_r.resize(n);
  for (int i = 0; i < n; ++i) {
    const Transition& tr = *batch[i];
    v.s.row(i) = tr.s.transpose();
    v.a.row(i) = tr.a.transpose();
    v.s_next_sample.row(i) = tr.s_next_sample.transpose();
    v.s_next_mean.row(i) = tr.s_next.transpose();
    v.var_s.row(i) = tr.var_s_next.transpose();
    v.r(i) = tr.r;
    v.cont(i) = tr.done ? 0.0 : 1.0;
    v.var_r(i) = tr.var_r;
  }
  return v;
}

/// Pessimistic targets for the whole batch; also returns the mean penalty.
Eigen::VectorXd strategy_targets(const BatchViews& v, SacState& sac, const PenaltyConfig& cfg,
                                 RngStream& rng, double& mean_penalty) {
  const int n = static_cast<int>(v.r.size());
  const double gamma = sac.cfg.gamma;
  Eigen::VectorXd y(n);
  mean_penalty = 0.0;

  if (cfg.strategy == Strategy::Mombo) {
    Eigen::MatrixXd a_next;
    sample_next_actions(sac, v.s_next_mean, rng, a_next);
    const int sdim = static_cast<int>(v.s.cols());
    const int adim = static_cast<int>(a_next.cols());
    Eigen::MatrixXd mean(n, sdim + adim), var(n, sdim + adim);
    mean << v.s_next_mean, a_next;
    var << v.var_s, Eigen::MatrixXd::Zero(n, adim);
    Eigen::MatrixXd mu0, var0, mu1, var1;
    mm_forward_batch(sac.targets[0], mean, var, mu0, var0);
    mm_forward_batch(sac.targets[1], mean, var, mu1, var1);
    for (int i = 0; i < n; ++i) {
      const double s0 = std::sqrt(std::max(0.0, var0(i, 0)));
      const double s1 = std::sqrt(std::max(0.0, var1(i, 0)));
      const double lcb0 = gamma * mu0(i, 0) - cfg.beta * gamma * s0;
      const double lcb1 = gamma * mu1(i, 0) - cfg.beta * gamma * s1;
      const double lcb = std::min(lcb0, lcb1);
      const double reward_pen = cfg.beta * std::sqrt(std::max(0.0, v.var_r(i)));
      y(i) = v.r(i) + v.cont(i) * lcb - reward_pen;
      const double unpenalized =
          v.r(i) + v.cont(i) * gamma * std::min(mu0(i, 0), mu1(i, 0));
      mean_penalty += unpenalized - y(i);
    }
    mean_penalty /= n;
    return y;
  }

  // MOPO and MOBILE bootstrap from the realized next-state sample.
  Eigen::MatrixXd a_next;
  sample_next_actions(sac, v.s_next_sample, rng, a_next);
  const Eigen::VectorXd q = min_target_q(sac, v.s_next_sample, a_next);
  Eigen::VectorXd penalty(n);
  if (cfg.strategy == Strategy::Mopo) {
    for (int i = 0; i < n; ++i) penalty(i) = v.var_s.row(i).cwiseSqrt().maxCoeff();
  } else {
    if (cfg.n_mc < 2) throw std::invalid_argument("MOBILE requires n_mc >= 2");
    const int sdim = static_cast<int>(v.s.cols());
    const int adim = static_cast<int>(a_next.cols());
    const int m = cfg.n_mc;
    Eigen::MatrixXd next_states(n * m, sdim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        for (int d = 0; d < sdim; ++d)
          next_states(i * m + j, d) =
              v.s_next_mean(i, d) + std::sqrt(v.var_s(i, d)) * rng.normal();
    Eigen::MatrixXd eps(n, adim);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < adim; ++c) eps(i, c) = rng.normal();
    const Eigen::MatrixXd raw = forward_batch(sac.actor, next_states);
    Eigen::MatrixXd actions(n * m, adim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        for (int c = 0; c < adim; ++c) {
          const double logstd = std::clamp(raw(i * m + j, adim + c), sac.cfg.logstd_min,
                                           sac.cfg.logstd_max);
          actions(i * m + j, c) = std::tanh(raw(i * m + j, c) + std::exp(logstd) * eps(i, c));
        }
    const Eigen::VectorXd qs = min_target_q(sac, next_states, actions);
    for (int i = 0; i < n; ++i) {
      const auto block = qs.segment(i * m, m);
      const double mean = block.mean();
      const double var = (block.array() - mean).square().sum() / double(m - 1);
      penalty(i) = gamma * v.cont(i) * std::sqrt(std::max(0.0, var));
    }
  }
  for (int i = 0; i < n; ++i) y(i) = v.r(i) + gamma * v.cont(i) * q(i) - cfg.beta * penalty(i);
  mean_penalty = cfg.beta * penalty.mean();
  return y;
}

}  // namespace

UpdateLosses critic_update(const std::vector<const Transition*>& batch, SacState& sac,
                           const PenaltyConfig& cfg, RngStream& rng) {
  BatchViews v = assemble(batch);
  const int n = static_cast<int>(batch.size());

  UpdateLosses losses;
  const Eigen::VectorXd y = strategy_targets(v, sac, cfg, rng, losses.mean_penalty);

  Eigen::MatrixXd input(n, v.s.cols() + v.a.cols());
  input << v.s, v.a;
  for (int k = 0; k < 2; ++k) {
    ForwardTape tape = forward_tape(sac.critics[k], input);
    const Eigen::VectorXd q = tape.output();
    const Eigen::VectorXd residual = q - y;
    losses.critic += residual.squaredNorm() / n;
    Eigen::MatrixXd upstream = (2.0 / n) * residual;
    MlpGrads grads = backward(sac.critics[k], tape, upstream);
    adam_step(sac.opt_critics[k], grads, sac.critics[k]);
  }
  losses.critic /= 2.0;
  if (!std::isfinite(losses.critic))
    throw std::runtime_error("critic_update: non-finite loss");

  for (int k = 0; k < 2; ++k) soft_update(sac.critics[k], sac.targets[k], sac.cfg.tau);
  return losses;
}

UpdateLosses actor_update(const std::vector<const Transition*>& batch, SacState& sac,
                          RngStream& rng) {
  if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
  const int n = static_cast<int>(batch.size());
  const int sdim = static_cast<int>(batch[0]->s.size());
  Eigen::MatrixXd states(n, sdim);
  for (int i = 0; i < n; ++i) states.row(i) = batch[i]->s.transpose();

  PolicySample ps = policy_sample(sac.actor, states, sac.cfg, rng);
  const double alpha = sac.alpha();

  Eigen::MatrixXd input(n, sdim + ps.actions.cols());
  input << states, ps.actions;
  ForwardTape tape0 = forward_tape(sac.critics[0], input);
  ForwardTape tape1 = forward_tape(sac.critics[1], input);
  const Eigen::VectorXd q0 = tape0.output();
  const Eigen::VectorXd q1 = tape1.output();

  // Gradient of min(q0, q1) w.r.t. the action block of the critic input.
  Eigen::MatrixXd pick0 = (q0.array() <= q1.array()).cast<double>();
  Eigen::MatrixXd dx0, dx1;
  backward(sac.critics[0], tape0, pick0, &dx0);
  backward(sac.critics[1], tape1, (1.0 - pick0.array()).matrix(), &dx1);
  const Eigen::MatrixXd dq_da =
      dx0.rightCols(ps.actions.cols()) + dx1.rightCols(ps.actions.cols());

  // Loss = mean(alpha * logp - min_q); maximizing entropy-regularized value.
  UpdateLosses losses;
  losses.actor = (alpha * ps.log_prob.array() - q0.cwiseMin(q1).array()).mean();
  if (!std::isfinite(losses.actor))
    throw std::runtime_error("actor_update: non-finite loss");

  Eigen::VectorXd logp_weight = Eigen::VectorXd::Constant(n, alpha / n);
  Eigen::MatrixXd grad_actions = -dq_da / n;
  MlpGrads grads = policy_backward(sac.actor, sac.cfg, ps, logp_weight, grad_actions);
  adam_step(sac.opt_actor, grads, sac.actor);

  if (sac.cfg.learn_alpha) {
    // d/d(log alpha) of -alpha * mean(logp + target_entropy), logp detached.
    const double mean_term = (ps.log_prob.array() + sac.cfg.target_entropy).mean();
    const double grad = -alpha * mean_term;
    losses.alpha = -alpha * mean_term;
    sac.opt_alpha.update(grad, sac.log_alpha);
  }
  return losses;
}

double aulc(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : curve) total += p.normalized_return;
  return total / static_cast<double>(curve.size());
}

std::pair<double, double> evaluate_policy(const ToyEnv& env, const SacState& sac, int episodes,
                                          RngStream& rng) {
  std::vector<double> returns(episodes);
  for (int e = 0; e < episodes; ++e) {
    RngStream ep_rng = rng.substream(static_cast<std::uint64_t>(e));
    Eigen::VectorXd s = env.reset(ep_rng);
    double total = 0.0;
    Eigen::MatrixXd state_row(1, env.state_dim);
    for (int t = 0; t < env.horizon; ++t) {
      state_row.row(0) = s.transpose();
      const Eigen::MatrixXd a = policy_mean_action(sac.actor, state_row, sac.cfg);
      const Eigen::VectorXd act = a.row(0).transpose();
      total += env.reward(s, act);
      s = env.step(s, act);
      if (env.terminal(s)) break;
    }
    returns[e] = total;
  }
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / episodes;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= std::max(1, episodes - 1);
  return {mean, std::sqrt(var)};
}

TrainResult train_policy(const std::vector<Transition>& real_data, const EnsembleModel& model,
                         const ToyEnv& env, SacState& sac, const PenaltyConfig& cfg,
                         const TrainConfig& tc, RngStream& rng) {
  if (real_data.empty()) throw std::invalid_argument("train_policy: empty dataset");

  const std::size_t synth_capacity =
      static_cast<std::size_t>(tc.retain_rollouts) * static_cast<std::size_t>(tc.rollout_batch) *
      static_cast<std::size_t>(tc.rollout_k);
  std::deque<std::vector<Transition>> synth_chunks;
  std::size_t synth_size = 0;
  std::vector<const Transition*> flat_synth;

  RngStream rollout_rng = rng.substream(1);
  RngStream batch_rng = rng.substream(2);
  RngStream update_rng = rng.substream(3);
  RngStream eval_rng = rng.substream(4);

  PolicyFn rollout_policy = [&sac](const Eigen::VectorXd& s, RngStream& r) {
    Eigen::MatrixXd row(1, s.size());
    row.row(0) = s.transpose();
    PolicySample ps = policy_sample(sac.actor, row, sac.cfg, r);
    return Eigen::VectorXd(ps.actions.row(0).transpose());
  };

  TrainResult result;
  UpdateLosses last_losses;
  const bool mix_synthetic = sac.cfg.real_ratio < 1.0 && model.state_dim > 0;

  for (long step = 0; step < tc.steps; ++step) {
    if (mix_synthetic && step % tc.rollout_freq == 0) {
      std::vector<Eigen::VectorXd> starts(tc.rollout_batch);
      for (int i = 0; i < tc.rollout_batch; ++i)
        starts[i] = real_data[rollout_rng.uniform_index(real_data.size())].s;
      RngStream step_rng = rollout_rng.substream(static_cast<std::uint64_t>(step));
      synth_chunks.push_back(rollout(model, rollout_policy, starts, tc.rollout_k, step_rng,
                                     env.terminal));
      synth_size += synth_chunks.back().size();
      while (synth_size > synth_capacity && synth_chunks.size() > 1) {
        synth_size -= synth_chunks.front().size();
        synth_chunks.pop_front();
      }
      flat_synth.clear();
      flat_synth.reserve(synth_size);
      for (const auto& chunk : synth_chunks)
        for (const auto& tr : chunk) flat_synth.push_back(&tr);
      result.max_synthetic_buffer = std::max(result.max_synthetic_buffer, flat_synth.size());
    }

    const int batch_size = sac.cfg.batch;
    int n_real = static_cast<int>(std::lround(sac.cfg.real_ratio * batch_size));
    n_real = std::clamp(n_real, 0, batch_size);
    if (flat_synth.empty()) n_real = batch_size;
    std::vector<const Transition*> batch;
    batch.reserve(batch_size);
    for (int i = 0; i < n_real; ++i)
      batch.push_back(&real_data[batch_rng.uniform_index(real_data.size())]);
    for (int i = n_real; i < batch_size; ++i)
      batch.push_back(flat_synth[batch_rng.uniform_index(flat_synth.size())]);

    last_losses = critic_update(batch, sac, cfg, update_rng);
    const UpdateLosses actor_losses = actor_update(batch, sac, update_rng);
    last_losses.actor = actor_losses.actor;
    last_losses.alpha = actor_losses.alpha;

    if ((step + 1) % tc.eval_interval == 0 || step + 1 == tc.steps) {
      RngStream ck_rng = eval_rng.substream(static_cast<std::uint64_t>(step + 1));
      const auto [mean, stddev] = evaluate_policy(env, sac, tc.eval_episodes, ck_rng);
      CurvePoint point;
      point.step = step + 1;
      point.eval_return_mean = mean;
      point.eval_return_std = stddev;
      point.normalized_return = normalized_return(env, mean);
      point.loss_critic = last_losses.critic;
      point.loss_actor = last_losses.actor;
      point.mean_penalty = last_losses.mean_penalty;
      result.curve.push_back(point);
      result.final_normalized = point.normalized_return;
      result.steps_run = step + 1;
      if (tc.stop_at_normalized >= 0.0 && point.normalized_return >= tc.stop_at_normalized)
        break;
    }
  }
  result.aulc = aulc(result.curve);
  if (result.steps_run == 0) result.steps_run = tc.steps;
  return result;
}

}  // namespace mombo
