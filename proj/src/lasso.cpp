#include "simexplain/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "simexplain/error.hpp"

namespace simexplain {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

struct Centered {
  std::vector<double> x, y;
  std::vector<double> x_mean;
  double y_mean = 0.0;
};

Centered center(std::span<const double> x, std::span<const double> y, int n, int p, bool fit_intercept) {
  Centered c{std::vector<double>(x.begin(), x.end()), std::vector<double>(y.begin(), y.end()),
             std::vector<double>(p, 0.0), 0.0};
  if (!fit_intercept) return c;
  for (int i = 0; i < n; ++i) {
    c.y_mean += y[i];
    for (int j = 0; j < p; ++j) c.x_mean[j] += x[static_cast<std::size_t>(i) * p + j];
  }
  c.y_mean /= n;
  for (auto& m : c.x_mean) m /= n;
  for (int i = 0; i < n; ++i) {
    c.y[i] -= c.y_mean;
    for (int j = 0; j < p; ++j) c.x[static_cast<std::size_t>(i) * p + j] -= c.x_mean[j];
  }
  return c;
}

}  // namespace

double lasso_alpha_max(std::span<const double> x, std::span<const double> y, int n, int p,
                       bool fit_intercept) {
  const auto c = center(x, y, n, p, fit_intercept);
  double best = 0.0;
  for (int j = 0; j < p; ++j) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += c.x[static_cast<std::size_t>(i) * p + j] * c.y[i];
    best = std::max(best, std::abs(dot) / n);
  }
  return best;
}

LassoResult lasso_coordinate_descent(std::span<const double> x, std::span<const double> y, int n,
                                     int p, const LassoOptions& opts) {
  if (n < 1 || p < 1) throw InvalidArgument("lasso: empty design");
  if (x.size() != static_cast<std::size_t>(n) * p || y.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("lasso: design/target size mismatch");
  if (opts.alpha < 0) throw InvalidArgument("lasso: alpha must be >= 0");
  const auto c = center(x, y, n, p, opts.fit_intercept);

  // Column-major copy for cache-friendly column sweeps.
  std::vector<double> cols(static_cast<std::size_t>(n) * p);
  std::vector<double> sq(p, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) {
      const double v = c.x[static_cast<std::size_t>(i) * p + j];
      cols[static_cast<std::size_t>(j) * n + i] = v;
      sq[j] += v * v;
    }

  LassoResult res{std::vector<double>(p, 0.0), 0.0, 0};
  std::vector<double> resid = c.y;
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < p; ++j) {
      if (sq[j] == 0.0) continue;
      const double* col = cols.data() + static_cast<std::size_t>(j) * n;
      double rho = 0.0;
      for (int i = 0; i < n; ++i) rho += col[i] * resid[i];
      const double z = sq[j] / n;
      rho = rho / n + z * res.coef[j];
      const double updated = soft_threshold(rho, opts.alpha) / z;
      const double delta = updated - res.coef[j];
      if (delta != 0.0) {
        for (int i = 0; i < n; ++i) resid[i] -= delta * col[i];
        res.coef[j] = updated;
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    res.sweeps = sweep;
    if (max_delta < opts.tol) {
      if (opts.fit_intercept) {
        res.intercept = c.y_mean;
        for (int j = 0; j < p; ++j) res.intercept -= c.x_mean[j] * res.coef[j];
      }
      return res;
    }
  }
  throw ConvergenceError("lasso coordinate descent did not converge", static_cast<std::size_t>(opts.max_sweeps));
}

}  // namespace simexplain
