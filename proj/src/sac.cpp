#include "mombo/sac.hpp"

#include <cmath>
#include <stdexcept>

namespace mombo {

namespace {
constexpr double kLn2Pi = 1.8378770664093454836;
constexpr double kLn2 = 0.6931471805599453094;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
}  // namespace

double SacState::alpha() const { return std::exp(log_alpha); }

SacState make_sac(int state_dim, int action_dim, const SacConfig& cfg, RngStream& rng) {
  if (state_dim < 1 || action_dim < 1)
    throw std::invalid_argument("make_sac: dimensions must be positive");
  SacState state;
  state.cfg = cfg;
  state.cfg.target_entropy = -static_cast<double>(action_dim);
  state.state_dim = state_dim;
  state.action_dim = action_dim;

  std::vector<int> actor_widths{state_dim};
  for (int h : cfg.hidden_actor) actor_widths.push_back(h);
  actor_widths.push_back(2 * action_dim);
  RngStream actor_rng = rng.substream(1);
  state.actor = glorot_mlp(actor_widths, actor_rng);
  state.opt_actor = make_adam(state.actor, AdamConfig{cfg.lr_actor});

  std::vector<int> critic_widths{state_dim + action_dim};
  for (int h : cfg.hidden_critic) critic_widths.push_back(h);
  critic_widths.push_back(1);
  for (int k = 0; k < 2; ++k) {
    RngStream critic_rng = rng.substream(2 + static_cast<std::uint64_t>(k));
    state.critics[k] = glorot_mlp(critic_widths, critic_rng);
    state.targets[k] = state.critics[k];
    state.opt_critics[k] = make_adam(state.critics[k], AdamConfig{cfg.lr_critic});
  }

  state.log_alpha = std::log(cfg.alpha_init);
  state.opt_alpha.cfg = AdamConfig{cfg.lr_alpha};
  return state;
}

PolicySample policy_sample(const MlpParams& actor, const Eigen::MatrixXd& states,
                           const SacConfig& cfg, RngStream& rng) {
  PolicySample ps;
  ps.tape = forward_tape(actor, states);
  const Eigen::MatrixXd& raw = ps.tape.output();
  const int adim = static_cast<int>(raw.cols()) / 2;
  const Eigen::Index n = states.rows();

  ps.raw_logstd = raw.rightCols(adim);
  Eigen::MatrixXd logstd =
      ps.raw_logstd.cwiseMax(cfg.logstd_min).cwiseMin(cfg.logstd_max);
  ps.sigma = logstd.array().exp();
  ps.eps.resize(n, adim);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int c = 0; c < adim; ++c) ps.eps(r, c) = rng.normal();

  Eigen::MatrixXd u = raw.leftCols(adim) + ps.sigma.cwiseProduct(ps.eps);
  ps.actions = u.array().tanh();

  ps.log_prob.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double lp = 0.0;
    for (int c = 0; c < adim; ++c) {
      lp += -0.5 * kLn2Pi - logstd(r, c) - 0.5 * ps.eps(r, c) * ps.eps(r, c);
      // log(1 - tanh(u)^2) in the u-stable form.
      lp -= 2.0 * (kLn2 - u(r, c) - softplus(-2.0 * u(r, c)));
    }
    ps.log_prob(r) = lp;
  }
  return ps;
}

Eigen::MatrixXd policy_mean_action(const MlpParams& actor, const Eigen::MatrixXd& states,
                                   const SacConfig& cfg) {
  const Eigen::MatrixXd raw = forward_batch(actor, states);
  const int adim = static_cast<int>(raw.cols()) / 2;
  (void)cfg;
  return raw.leftCols(adim).array().tanh();
}

MlpGrads policy_backward(const MlpParams& actor, const SacConfig& cfg, const PolicySample& ps,
                         const Eigen::VectorXd& logp_weight,
                         const Eigen::MatrixXd& grad_actions) {
  const Eigen::Index n = ps.actions.rows();
  const int adim = static_cast<int>(ps.actions.cols());
  if (logp_weight.size() != n || grad_actions.rows() != n || grad_actions.cols() != adim)
    throw std::invalid_argument("policy_backward: shape mismatch");

  Eigen::MatrixXd upstream(n, 2 * adim);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int c = 0; c < adim; ++c) {
      const double a = ps.actions(r, c);
      // d log_prob / du = 2a (the Gaussian term cancels under
      // reparameterization); d a / du = 1 - a^2.
      const double g_u = logp_weight(r) * 2.0 * a + grad_actions(r, c) * (1.0 - a * a);
      upstream(r, c) = g_u;  // du/dmean = 1
      const bool inside = ps.raw_logstd(r, c) > cfg.logstd_min &&
                          ps.raw_logstd(r, c) < cfg.logstd_max;
      const double g_logstd =
          -logp_weight(r) + g_u * ps.sigma(r, c) * ps.eps(r, c);
      upstream(r, adim + c) = inside ? g_logstd : 0.0;
    }
  }
  return backward(actor, ps.tape, upstream);
}

double squashed_logprob_scalar(double u, double mean, double stddev) {
  const double z = (u - mean) / stddev;
  double lp = -0.5 * kLn2Pi - std::log(stddev) - 0.5 * z * z;
  lp -= 2.0 * (kLn2 - u - softplus(-2.0 * u));
  return lp;
}

void soft_update(const MlpParams& net, MlpParams& target, double tau) {
  if (net.layers.size() != target.layers.size())
    throw std::invalid_argument("soft_update: depth mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    target.layers[l].weights =
        tau * net.layers[l].weights + (1.0 - tau) * target.layers[l].weights;
    target.layers[l].bias = tau * net.layers[l].bias + (1.0 - tau) * target.layers[l].bias;
  }
}

}  // namespace mombo
