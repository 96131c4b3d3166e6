#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mombo/gaussmm.hpp"
#include "mombo/mlp.hpp"
#include "mombo/rng.hpp"

namespace mombo {

/// Monte Carlo sample set: one network output per row.
struct SampleBatch {
  Eigen::MatrixXd samples;  // n x output_dim
  std::uint64_t seed = 0;
  int count() const { return static_cast<int>(samples.rows()); }
};

/// Unbiased empirical moments (variance divisor n-1). The variance is absent,
/// not zero, when only one sample is available.
struct EmpiricalMoments {
  Eigen::VectorXd mean;
  std::optional<Eigen::VectorXd> variance;
  int count = 0;
};

/// Draws n i.i.d. inputs from the belief and pushes each through the network.
SampleBatch mc_forward(const MlpParams& params, const DiagonalGaussian& input, int n,
                       RngStream& rng);

EmpiricalMoments empirical_moments(const SampleBatch& batch);

/// Exact 1-Wasserstein distance between the two scalar empirical measures via
/// order statistics; unequal sizes are resampled onto a common quantile grid
/// of max(n_a, n_b) points.
double empirical_w1(std::vector<double> a, std::vector<double> b);

/// Analytic upper bound |mu1 - mu2| + |sigma1 - sigma2| on W1 between two
/// scalar normals.
double gaussian_w1_upper(double mean_a, double var_a, double mean_b, double var_b);
double gaussian_w1_upper(const DiagonalGaussian& a, const DiagonalGaussian& b);

}  // namespace mombo
