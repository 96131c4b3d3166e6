#pragma once

#include <Eigen/Dense>

namespace mombo {

/// One offline tuple. Real transitions carry zero variances and
/// s_next_sample == s_next. Synthetic tuples store the predictive mean in
/// s_next, the realized draw in s_next_sample, and the generating elite's
/// predictive variances.
struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  Eigen::VectorXd s_next_sample;
  bool done = false;
  Eigen::VectorXd var_s_next;
  double var_r = 0.0;
};

}  // namespace mombo
