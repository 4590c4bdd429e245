#pragma once

#include <span>
#include <vector>

namespace simexplain {

struct LassoOptions {
  double alpha = 0.0;
  bool fit_intercept = true;
  int max_sweeps = 10000;
  /// Converged when the largest coefficient change in a sweep is below tol.
  double tol = 1e-12;
};

struct LassoResult {
  std::vector<double> coef;
  double intercept = 0.0;
  int sweeps = 0;
};

/// Cyclic coordinate descent for
///   (1 / 2n) |y - b - X beta|^2 + alpha |beta|_1
/// with X row-major n x p. Throws ConvergenceError after max_sweeps.
LassoResult lasso_coordinate_descent(std::span<const double> x, std::span<const double> y, int n,
                                     int p, const LassoOptions& opts);

/// Smallest alpha for which every coefficient is zero.
double lasso_alpha_max(std::span<const double> x, std::span<const double> y, int n, int p,
                       bool fit_intercept);

}  // namespace simexplain
