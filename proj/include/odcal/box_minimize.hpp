#pragma once

#include <functional>

#include <Eigen/Dense>

namespace odcal {

// Objective returning f(x) and writing the gradient into `grad`. May return a
// non-finite value to reject a point (the line search backs off).
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BoxMinimizeOptions {
  int max_iters = 100;
  int memory = 10;
  double pg_tol = 1e-6;   // infinity norm of the projected gradient
  double f_rel_tol = 1e-10;
};

struct BoxMinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

// Projected L-BFGS with an Armijo backtracking search along the projected
// path. Variables pinned at a bound with the gradient pointing outward are
// held fixed for the step.
BoxMinimizeResult minimize_box(const SmoothObjective& fn, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const BoxMinimizeOptions& opts = {});

}  // namespace odcal
