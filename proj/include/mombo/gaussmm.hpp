#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mombo/mlp.hpp"

namespace mombo {

/// Factorized normal belief over a real vector: per-dimension mean and
/// variance. A zero-variance instance represents a point value.
struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  int dim() const { return static_cast<int>(mean.size()); }
  /// Throws std::invalid_argument if lengths differ, entries are non-finite
  /// or any variance is negative.
  void validate() const;
};

DiagonalGaussian point_mass(const Eigen::VectorXd& value);

/// Exact moments of an affine map of a factorized Gaussian:
/// mean' = W mean + b, variance' = (W o W) variance.
DiagonalGaussian mm_linear(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                           const DiagonalGaussian& input);

/// Matched moments of max(0, X) per dimension. With alpha = mu/sigma:
///   mean'     = mu Phi(alpha) + sigma phi(alpha)
///   variance' = (mu^2 + sigma^2) Phi(alpha) + mu sigma phi(alpha) - mean'^2
/// sigma = 0 degenerates to (max(0, mu), 0). alpha is evaluated clamped to
/// +-38 and the variance is kept inside [0, sigma^2], which the exact result
/// satisfies and floating point cancellation can overshoot.
DiagonalGaussian mm_relu(const DiagonalGaussian& input);

/// Scalar core of mm_relu.
void mm_relu_scalar(double mean, double variance, double& mean_out, double& variance_out);

/// Per-layer beliefs recorded by mm_forward: post-linear (pre-activation) and
/// post-ReLU beliefs in order, 2L-1 stages (the final layer has no
/// activation stage).
struct PropagationTrace {
  std::vector<DiagonalGaussian> stages;
};

struct MmForwardResult {
  DiagonalGaussian output;
  PropagationTrace trace;
};

/// Progressive moment matching through the network: alternating mm_linear and
/// mm_relu over hidden layers, final layer linear only. Costs two affine
/// passes per layer (one for means, one for variances).
MmForwardResult mm_forward(const MlpParams& params, const DiagonalGaussian& input);

DiagonalGaussian concat_beliefs(const DiagonalGaussian& a, const DiagonalGaussian& b);

/// Batched propagation; rows of means/variances are independent beliefs.
/// Traces are not recorded.
void mm_forward_batch(const MlpParams& params, const Eigen::MatrixXd& means,
                      const Eigen::MatrixXd& variances, Eigen::MatrixXd& out_means,
                      Eigen::MatrixXd& out_variances);

}  // namespace mombo
