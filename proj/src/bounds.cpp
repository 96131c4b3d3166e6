#include "mombo/bounds.hpp"

#include <cmath>
#include <stdexcept>

#include "mombo/math.hpp"

namespace mombo {

double gaussian_negative_mass(double mean, double stddev) {
  if (stddev <= 0.0) return std::max(0.0, -mean);
  const double ratio = mean / stddev;
  return std::max(0.0, stddev * std_normal_pdf(ratio) - mean * std_normal_cdf(-ratio));
}

double relu_mm_w1_bound(double mean, double variance) {
  if (variance < 0.0) throw std::invalid_argument("relu_mm_w1_bound: negative variance");
  if (variance == 0.0) return 0.0;
  double matched_mean = 0.0, matched_var = 0.0;
  mm_relu_scalar(mean, variance, matched_mean, matched_var);
  const double matched_std = std::sqrt(matched_var);
  return gaussian_negative_mass(matched_mean, matched_std) + std::abs(mean - matched_mean) +
         std::abs(std::sqrt(variance) - matched_std);
}

BoundReport mlp_mm_w1_bound(const MlpParams& params, const PropagationTrace& trace) {
  params.validate();
  const int depth = params.depth();
  if (static_cast<int>(trace.stages.size()) != 2 * depth - 1)
    throw std::invalid_argument("mlp_mm_w1_bound: trace length does not match network depth");

  BoundReport report;
  report.layer_norm.reserve(depth);
  for (const auto& layer : params.layers)
    report.layer_norm.push_back(induced_l1_norm(layer.weights));

  // Hidden layer l (1-based): stage 2l-2 is post-linear, 2l-1 post-ReLU.
  for (int l = 1; l < depth; ++l) {
    const DiagonalGaussian& linear = trace.stages[2 * l - 2];
    const DiagonalGaussian& matched = trace.stages[2 * l - 1];
    if (linear.dim() != params.layers[l - 1].weights.rows() || matched.dim() != linear.dim())
      throw std::invalid_argument("mlp_mm_w1_bound: trace widths do not match params");
    double g_sum = 0.0, g_max = 0.0, c_sum = 0.0;
    for (int u = 0; u < matched.dim(); ++u) {
      const double g =
          gaussian_negative_mass(matched.mean(u), std::sqrt(matched.variance(u)));
      g_sum += g;
      g_max = std::max(g_max, g);
      c_sum += std::abs(linear.mean(u) - matched.mean(u)) +
               std::abs(std::sqrt(linear.variance(u)) - std::sqrt(matched.variance(u)));
    }
    report.layer_g.push_back(g_sum);
    report.layer_c.push_back(c_sum);
    report.layer_g_max_unit.push_back(g_max);
    if (g_max > 1.0) report.g_unit_above_one = true;
  }

  double total = 0.0;
  for (int l = 2; l <= depth; ++l) {
    double tail_norm = 1.0;
    for (int j = l; j <= depth; ++j) tail_norm *= report.layer_norm[j - 1];
    total += (report.layer_g[l - 2] + report.layer_c[l - 2]) * tail_norm;
  }
  report.mm_w1_bound = total;
  return report;
}

double sampling_w1_bound(const std::vector<double>& layer_norms, int n, double delta,
                         double rmax, double gamma) {
  if (n < 2)
    throw std::invalid_argument("sampling_w1_bound: undefined for fewer than two samples");
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("sampling_w1_bound: delta must be in (0, 1)");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw std::invalid_argument("sampling_w1_bound: gamma must be in (0, 1)");
  if (rmax <= 0.0) throw std::invalid_argument("sampling_w1_bound: rmax must be positive");
  double norm_product = 1.0;
  for (double norm : layer_norms) norm_product *= norm;
  const double half = std::floor(static_cast<double>(n) / 2.0);
  const double inner =
      8.0 * (-std::log(delta / 4.0)) * rmax * rmax / (half * (1.0 - gamma) * (1.0 - gamma));
  return norm_product * std::sqrt(inner);
}

void apply_suboptimality(BoundReport& report, double horizon, int n, double delta,
                         double rmax, double gamma) {
  if (horizon < 1.0) throw std::invalid_argument("apply_suboptimality: horizon must be >= 1");
  report.horizon = horizon;
  report.n_samples = n;
  report.delta = delta;
  report.rmax = rmax;
  report.gamma = gamma;
  report.mc_w1_bound = sampling_w1_bound(report.layer_norm, n, delta, rmax, gamma);
  report.mm_subopt = 2.0 * horizon * report.mm_w1_bound;
  report.mc_subopt = 2.0 * horizon * report.mc_w1_bound;
}

BoundReport suboptimality_bounds(const MlpParams& params, const PropagationTrace& trace,
                                 double horizon, int n, double delta, double rmax,
                                 double gamma) {
  BoundReport report = mlp_mm_w1_bound(params, trace);
  apply_suboptimality(report, horizon, n, delta, rmax, gamma);
  return report;
}

}  // namespace mombo
