#pragma once

#include <vector>

#include "mombo/gaussmm.hpp"
#include "mombo/mlp.hpp"

namespace mombo {

/// Every computable bound quantity for one network and input belief: the
/// per-layer moment-matching terms, the layer operator norms, the
/// deterministic W1 bound and its suboptimality scaling, and the
/// sampling-based probabilistic counterparts.
struct BoundReport {
  std::vector<double> layer_g;          // hidden layers, summed over units
  std::vector<double> layer_c;          // hidden layers
  std::vector<double> layer_norm;       // ||A_l|| for every layer
  std::vector<double> layer_g_max_unit; // largest per-unit G per hidden layer
  bool g_unit_above_one = false;        // flagged, never clamped

  double mm_w1_bound = 0.0;
  double mm_subopt = 0.0;
  double mc_w1_bound = 0.0;
  double mc_subopt = 0.0;

  double horizon = 0.0;
  double gamma = 0.0;
  double rmax = 0.0;
  double delta = 0.0;
  int n_samples = 0;
};

/// W1 distance bound between ReLU(X) and its matched Gaussian for scalar
/// X ~ N(mean, variance):
///   sigma~ phi(mu~/sigma~) - mu~ Phi(-mu~/sigma~) + |mu - mu~| + |sigma - sigma~|.
/// A point mass (variance 0) matches exactly, so the bound is 0.
double relu_mm_w1_bound(double mean, double variance);

/// Scalar G term: sigma phi(mu/sigma) - mu Phi(-mu/sigma), i.e. the integral
/// of the Gaussian cdf over the negative axis.
double gaussian_negative_mass(double mean, double stddev);

/// Deterministic W1 bound for a full moment-matched MLP pass:
///   sum_{l=2}^{L} (G_{l-1} + C_{l-1}) prod_{j=l}^{L} ||A_j||
/// where G_l sums gaussian_negative_mass over the post-ReLU matched units of
/// hidden layer l and C_l is the L1 distance between the post-linear belief
/// and its post-ReLU matched moments (means plus standard deviations).
/// The trace must come from mm_forward on the same params.
BoundReport mlp_mm_w1_bound(const MlpParams& params, const PropagationTrace& trace);

/// Probabilistic sampling-based W1 bound:
///   prod_l ||A_l|| * sqrt(8 ln(4/delta) rmax^2 / (floor(n/2) (1-gamma)^2)).
/// Undefined for n < 2.
double sampling_w1_bound(const std::vector<double>& layer_norms, int n, double delta,
                         double rmax, double gamma);

/// Fills mc_* for the given sampling parameters and scales both W1 bounds by
/// 2H into the suboptimality fields.
void apply_suboptimality(BoundReport& report, double horizon, int n, double delta,
                         double rmax, double gamma);

/// One-call assembly of the full report.
BoundReport suboptimality_bounds(const MlpParams& params, const PropagationTrace& trace,
                                 double horizon, int n, double delta, double rmax,
                                 double gamma);

}  // namespace mombo
