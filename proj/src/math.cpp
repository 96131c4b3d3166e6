#include "mombo/math.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace mombo {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kInvSqrt2 = 0.7071067811865475244;
std::atomic<std::uint64_t> g_matvecs{0};
}  // namespace

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double induced_l1_norm(const Eigen::MatrixXd& a) {
  if (a.rows() == 0 || a.cols() == 0)
    throw std::invalid_argument("induced_l1_norm: empty matrix");
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

std::uint64_t matvec_count() { return g_matvecs.load(); }
void reset_matvec_count() { g_matvecs.store(0); }
void count_matvecs(std::uint64_t n) { g_matvecs.fetch_add(n); }

}  // namespace mombo
