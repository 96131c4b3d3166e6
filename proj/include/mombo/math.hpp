#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace mombo {

/// Standard normal density phi(x) = exp(-x^2/2)/sqrt(2*pi).
double std_normal_pdf(double x);

/// Standard normal cdf via erfc; absolute error below 1e-12 on [-8, 8] and
/// saturating to 0/1 in the far tails.
double std_normal_cdf(double x);

/// Induced L1 operator norm ||A||_{1->1}: max absolute column sum.
double induced_l1_norm(const Eigen::MatrixXd& a);

/// Running count of matrix-vector product equivalents performed by forward
/// passes (a batched pass over n rows counts n per layer). Used by the cost
/// accounting tests; not thread safe beyond atomic increments.
std::uint64_t matvec_count();
void reset_matvec_count();
void count_matvecs(std::uint64_t n);

}  // namespace mombo
