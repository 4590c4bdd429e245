#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/error.hpp"
#include "simexplain/lasso.hpp"
#include "simexplain/segmentation.hpp"

using namespace simexplain;

namespace {
// n x p design with orthonormal columns scaled so X^T X / n = I.
std::vector<double> orthonormal_design(int n, int p, Rng& rng) {
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  for (int j = 0; j < p; ++j) {
    for (auto& v : cols[j]) v = nd(rng);
    for (int k = 0; k < j; ++k) {
      double d = 0;
      for (int i = 0; i < n; ++i) d += cols[j][i] * cols[k][i];
      for (int i = 0; i < n; ++i) cols[j][i] -= d * cols[k][i];
    }
    double nrm = 0;
    for (double v : cols[j]) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (auto& v : cols[j]) v /= nrm;
  }
  std::vector<double> x(static_cast<std::size_t>(n) * p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x[i * p + j] = cols[j][i] * std::sqrt(static_cast<double>(n));
  return x;
}
}  // namespace

TEST_CASE("coordinate descent equals the soft-threshold closed form on orthonormal designs") {
  auto rng = make_rng(21);
  std::normal_distribution<double> nd;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 30 + inst, p = 3 + inst % 6;
    const auto x = orthonormal_design(n, p, rng);
    std::vector<double> y(n);
    for (auto& v : y) v = nd(rng);
    const double alpha = 0.05 + 0.02 * inst;
    LassoOptions o;
    o.alpha = alpha;
    o.fit_intercept = false;
    const auto r = lasso_coordinate_descent(x, y, n, p, o);
    for (int j = 0; j < p; ++j) {
      double z = 0;
      for (int i = 0; i < n; ++i) z += x[i * p + j] * y[i];
      z /= n;
      const double closed = std::copysign(std::max(std::abs(z) - alpha, 0.0), z);
      CHECK(std::abs(r.coef[j] - closed) < 1e-8);
    }
  }
}

TEST_CASE("alpha_max zeroes every coefficient") {
  auto rng = make_rng(22);
  std::vector<double> x(40 * 5), y(40);
  for (auto& v : x) v = uniform01(rng);
  for (auto& v : y) v = uniform01(rng);
  const double amax = lasso_alpha_max(x, y, 40, 5, true);
  LassoOptions o;
  o.alpha = amax;
  for (double c : lasso_coordinate_descent(x, y, 40, 5, o).coef) CHECK(c == 0.0);
  o.alpha = 0.5 * amax;
  const auto r = lasso_coordinate_descent(x, y, 40, 5, o);
  CHECK(std::any_of(r.coef.begin(), r.coef.end(), [](double c) { return c != 0.0; }));
}

TEST_CASE("lasso reports non-convergence") {
  auto rng = make_rng(23);
  std::vector<double> x(40 * 5), y(40);
  for (auto& v : x) v = uniform01(rng);
  for (auto& v : y) v = uniform01(rng);
  LassoOptions o;
  o.alpha = 1e-4;
  o.max_sweeps = 1;
  CHECK_THROWS_AS(lasso_coordinate_descent(x, y, 40, 5, o), ConvergenceError);
}

TEST_CASE("grid segmentation tiles the image") {
  const auto s = grid_segments(56, 56, 49);
  CHECK(s.count == 49);
  std::vector<int> sizes(49, 0);
  for (int l : s.labels) ++sizes[l];
  for (int v : sizes) CHECK(v == 64);
  CHECK_THROWS_AS(grid_segments(56, 56, 50), InvalidArgument);
}

TEST_CASE("slic labels are compact and in range") {
  auto rng = make_rng(24);
  const auto img = testutil::random_image({20, 20, 3}, rng);
  const auto s = slic_segments(img, 16);
  REQUIRE(s.labels.size() == 400);
  std::vector<bool> seen(s.count, false);
  for (int l : s.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l < s.count);
    seen[l] = true;
  }
  for (bool b : seen) CHECK(b);
}
