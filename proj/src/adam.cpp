#include "mombo/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mombo {

AdamState make_adam(const MlpParams& params, const AdamConfig& cfg) {
  AdamState state;
  state.cfg = cfg;
  for (const auto& layer : params.layers) {
    DenseLayer zero;
    zero.weights = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    zero.bias = Eigen::VectorXd::Zero(layer.bias.size());
    state.m.push_back(zero);
    state.v.push_back(zero);
  }
  return state;
}

void adam_step(AdamState& state, const MlpGrads& grads, MlpParams& params) {
  if (grads.layers.size() != params.layers.size() || state.m.size() != params.layers.size())
    throw std::invalid_argument("adam_step: shape mismatch between state, grads and params");
  for (std::size_t l = 0; l < grads.layers.size(); ++l)
    if (!grads.layers[l].weights.allFinite() || !grads.layers[l].bias.allFinite())
      throw std::runtime_error("adam_step: non-finite gradient at layer " + std::to_string(l));

  state.step += 1;
  const auto& cfg = state.cfg;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& m = state.m[l];
    auto& v = state.v[l];
    const auto& g = grads.layers[l];
    m.weights = cfg.beta1 * m.weights + (1.0 - cfg.beta1) * g.weights;
    m.bias = cfg.beta1 * m.bias + (1.0 - cfg.beta1) * g.bias;
    v.weights = cfg.beta2 * v.weights + (1.0 - cfg.beta2) * g.weights.cwiseProduct(g.weights);
    v.bias = cfg.beta2 * v.bias + (1.0 - cfg.beta2) * g.bias.cwiseProduct(g.bias);
    params.layers[l].weights.array() -=
        cfg.lr * (m.weights.array() / bc1) /
        ((v.weights.array() / bc2).sqrt() + cfg.eps);
    params.layers[l].bias.array() -=
        cfg.lr * (m.bias.array() / bc1) / ((v.bias.array() / bc2).sqrt() + cfg.eps);
  }
}

void ScalarAdam::update(double grad, double& param) {
  if (!std::isfinite(grad)) throw std::runtime_error("ScalarAdam: non-finite gradient");
  step += 1;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  param -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
}

}  // namespace mombo
