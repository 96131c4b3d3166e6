#pragma once

#include "mombo/mlp.hpp"

namespace mombo {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam accumulators mirroring the parameter shapes.
struct AdamState {
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  long step = 0;
  AdamConfig cfg;
};

AdamState make_adam(const MlpParams& params, const AdamConfig& cfg);

/// Standard bias-corrected Adam update, in place. Throws std::runtime_error
/// naming the offending layer if a gradient is non-finite.
void adam_step(AdamState& state, const MlpGrads& grads, MlpParams& params);

/// Scalar variant, used for the entropy temperature.
struct ScalarAdam {
  double m = 0.0;
  double v = 0.0;
  long step = 0;
  AdamConfig cfg;
  void update(double grad, double& param);
};

}  // namespace mombo
