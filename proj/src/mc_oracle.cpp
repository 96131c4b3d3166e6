#include "mombo/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mombo {

SampleBatch mc_forward(const MlpParams& params, const DiagonalGaussian& input, int n,
                       RngStream& rng) {
  if (n < 1) throw std::invalid_argument("mc_forward: n must be at least 1");
  input.validate();
  const Eigen::VectorXd stddev = input.variance.cwiseSqrt();
  SampleBatch batch;
  batch.seed = rng.seed();
  batch.samples.resize(n, params.output_dim());
  // Chunked so million-sample oracles stay within a bounded working set.
  constexpr int kChunk = 4096;
  Eigen::MatrixXd draws(std::min(n, kChunk), input.dim());
  for (int start = 0; start < n; start += kChunk) {
    const int rows = std::min(kChunk, n - start);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < input.dim(); ++c)
        draws(r, c) = input.mean(c) + stddev(c) * rng.normal();
    batch.samples.middleRows(start, rows) =
        forward_batch(params, draws.topRows(rows));
  }
  return batch;
}

EmpiricalMoments empirical_moments(const SampleBatch& batch) {
  const int n = batch.count();
  if (n < 1) throw std::invalid_argument("empirical_moments: empty batch");
  EmpiricalMoments moments;
  moments.count = n;
  moments.mean = batch.samples.colwise().mean();
  if (n >= 2) {
    Eigen::MatrixXd centered = batch.samples.rowwise() - moments.mean.transpose();
    moments.variance = centered.cwiseProduct(centered).colwise().sum() / double(n - 1);
  }
  return moments;
}

namespace {

/// Step-function quantile of a sorted sample at probability p in (0, 1).
double step_quantile(const std::vector<double>& sorted, double p) {
  const auto n = static_cast<std::ptrdiff_t>(sorted.size());
  auto idx = static_cast<std::ptrdiff_t>(std::floor(p * static_cast<double>(n)));
  idx = std::clamp<std::ptrdiff_t>(idx, 0, n - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

}  // namespace

double empirical_w1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empirical_w1: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = std::max(a.size(), b.size());
  double total = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < n; ++i) total += std::abs(a[i] - b[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      total += std::abs(step_quantile(a, p) - step_quantile(b, p));
    }
  }
  return total / static_cast<double>(n);
}

double gaussian_w1_upper(double mean_a, double var_a, double mean_b, double var_b) {
  if (var_a < 0.0 || var_b < 0.0)
    throw std::invalid_argument("gaussian_w1_upper: negative variance");
  return std::abs(mean_a - mean_b) + std::abs(std::sqrt(var_a) - std::sqrt(var_b));
}

double gaussian_w1_upper(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  if (a.dim() != 1 || b.dim() != 1)
    throw std::invalid_argument("gaussian_w1_upper: scalar beliefs expected");
  return gaussian_w1_upper(a.mean(0), a.variance(0), b.mean(0), b.variance(0));
}

}  // namespace mombo
