#include "mombo/gaussmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mombo/math.hpp"

namespace mombo {

void DiagonalGaussian::validate() const {
  if (mean.size() != variance.size())
    throw std::invalid_argument("DiagonalGaussian: mean and variance lengths differ");
  if (!mean.allFinite() || !variance.allFinite())
    throw std::invalid_argument("DiagonalGaussian: non-finite entries");
  if ((variance.array() < 0.0).any())
    throw std::invalid_argument("DiagonalGaussian: negative variance");
}

DiagonalGaussian point_mass(const Eigen::VectorXd& value) {
  return DiagonalGaussian{value, Eigen::VectorXd::Zero(value.size())};
}

DiagonalGaussian mm_linear(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                           const DiagonalGaussian& input) {
  input.validate();
  if (weights.cols() != input.dim() || weights.rows() != bias.size())
    throw std::invalid_argument("mm_linear: shape mismatch");
  DiagonalGaussian out;
  out.mean = weights * input.mean + bias;
  out.variance = weights.cwiseProduct(weights) * input.variance;
  count_matvecs(2);
  return out;
}

void mm_relu_scalar(double mean, double variance, double& mean_out, double& variance_out) {
  if (variance <= 0.0) {
    mean_out = std::max(0.0, mean);
    variance_out = 0.0;
    return;
  }
  const double sigma = std::sqrt(variance);
  const double alpha = std::clamp(mean / sigma, -38.0, 38.0);
  // At the clamp rails the tail terms are subnormal and round away entirely;
  // these early-outs reproduce the clamped evaluation without denormal ops.
  if (alpha >= 38.0) {
    mean_out = mean;
    variance_out = variance;
    return;
  }
  if (alpha <= -38.0) {
    mean_out = 0.0;
    variance_out = 0.0;
    return;
  }
  const double pdf = std_normal_pdf(alpha);
  const double cdf = std_normal_cdf(alpha);
  if (alpha >= 0.0) {
    // mean + sigma*(phi - alpha*Phi(-alpha)) equals the matched mean and keeps
    // mean_out >= mean under rounding (Lemma-style monotonicity is asserted
    // exactly by the tests).
    const double lift = std::max(0.0, pdf - alpha * std_normal_cdf(-alpha));
    mean_out = mean + sigma * lift;
  } else {
    mean_out = std::max(0.0, mean * cdf + sigma * pdf);
    if (mean_out < std::numeric_limits<double>::min()) mean_out = 0.0;
  }
  // variance_out = sigma^2 * v(alpha) with v in [0, 1]; the exact v never
  // exceeds 1 (the clamp guards rounding overshoot near the saturated tail).
  const double g = alpha * cdf + pdf;
  double v = (alpha * alpha + 1.0) * cdf + alpha * pdf - g * g;
  v = std::clamp(v, 0.0, 1.0);
  variance_out = variance * v;
  // flush subnormals to an exact point mass: they poison downstream matrix
  // products with denormal arithmetic
  if (variance_out < std::numeric_limits<double>::min()) variance_out = 0.0;
}

DiagonalGaussian mm_relu(const DiagonalGaussian& input) {
  input.validate();
  DiagonalGaussian out;
  out.mean.resize(input.dim());
  out.variance.resize(input.dim());
  for (int i = 0; i < input.dim(); ++i)
    mm_relu_scalar(input.mean(i), input.variance(i), out.mean(i), out.variance(i));
  return out;
}

MmForwardResult mm_forward(const MlpParams& params, const DiagonalGaussian& input) {
  params.validate();
  if (input.dim() != params.input_dim())
    throw std::invalid_argument("mm_forward: input belief does not match first layer width");
  MmForwardResult result;
  DiagonalGaussian belief = input;
  const int depth = params.depth();
  result.trace.stages.reserve(2 * depth - 1);
  for (int l = 0; l < depth; ++l) {
    belief = mm_linear(params.layers[l].weights, params.layers[l].bias, belief);
    result.trace.stages.push_back(belief);
    if (l + 1 < depth) {
      belief = mm_relu(belief);
      result.trace.stages.push_back(belief);
    }
  }
  result.output = belief;
  return result;
}

DiagonalGaussian concat_beliefs(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  a.validate();
  b.validate();
  DiagonalGaussian out;
  out.mean.resize(a.dim() + b.dim());
  out.variance.resize(a.dim() + b.dim());
  out.mean << a.mean, b.mean;
  out.variance << a.variance, b.variance;
  return out;
}

void mm_forward_batch(const MlpParams& params, const Eigen::MatrixXd& means,
                      const Eigen::MatrixXd& variances, Eigen::MatrixXd& out_means,
                      Eigen::MatrixXd& out_variances) {
  if (means.rows() != variances.rows() || means.cols() != variances.cols())
    throw std::invalid_argument("mm_forward_batch: mean/variance shape mismatch");
  if (means.cols() != params.input_dim())
    throw std::invalid_argument("mm_forward_batch: belief width does not match first layer");
  Eigen::MatrixXd m = means;
  Eigen::MatrixXd v = variances;
  const int depth = params.depth();
  for (int l = 0; l < depth; ++l) {
    const auto& layer = params.layers[l];
    m = ((m * layer.weights.transpose()).rowwise() + layer.bias.transpose()).eval();
    v = (v * layer.weights.cwiseProduct(layer.weights).transpose()).eval();
    count_matvecs(static_cast<std::uint64_t>(2 * means.rows()));
    if (l + 1 < depth) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
          mm_relu_scalar(m(r, c), v(r, c), m(r, c), v(r, c));
    }
  }
  out_means = std::move(m);
  out_variances = std::move(v);
}

}  // namespace mombo
