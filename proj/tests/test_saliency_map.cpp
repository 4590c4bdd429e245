#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/error.hpp"
#include "simexplain/saliency_map.hpp"

using namespace simexplain;
using testutil::random_grid;

TEST_CASE("bilinear 2x2 ramp to 2x4") {
  const Grid in(2, 2, {0, 1, 0, 1});
  const Grid out = resize_map(in, 2, 4, ResizeMode::Bilinear);
  for (int r = 0; r < 2; ++r) {
    CHECK(out(r, 0) == 0.0);
    CHECK(out(r, 3) == 1.0);
    for (int c = 0; c < 3; ++c) CHECK(out(r, c) < out(r, c + 1));
  }
}

TEST_CASE("average pool 4x4 to 2x2 takes block means") {
  Grid in(4, 4);
  for (int i = 0; i < 16; ++i) in.data[i] = i + 1;
  const Grid out = resize_map(in, 2, 2, ResizeMode::AveragePool);
  CHECK(out(0, 0) == doctest::Approx((1 + 2 + 5 + 6) / 4.0));
  CHECK(out(0, 1) == doctest::Approx((3 + 4 + 7 + 8) / 4.0));
  CHECK(out(1, 0) == doctest::Approx((9 + 10 + 13 + 14) / 4.0));
  CHECK(out(1, 1) == doctest::Approx((11 + 12 + 15 + 16) / 4.0));
}

TEST_CASE("normalize_map examples") {
  const auto n = normalize_map(Grid(1, 3, {2, 4, 6}));
  CHECK_FALSE(n.degenerate);
  CHECK(n.grid.data == std::vector<double>{0.0, 0.5, 1.0});
  const auto c = normalize_map(Grid(1, 3, {5, 5, 5}));
  CHECK(c.degenerate);
  CHECK(c.grid.data == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(normalize_map(Grid(1, 2, {0.0, std::nan("")})), InvalidData);
}

TEST_CASE("normalize_map properties on random grids") {
  auto rng = make_rng(3);
  for (int t = 0; t < 50; ++t) {
    const Grid g = random_grid(1 + t % 7, 1 + (t * 3) % 9, rng);
    if (g.size() < 2) continue;
    const auto once = normalize_map(g);
    const auto twice = normalize_map(once.grid);
    CHECK(twice.grid.data == once.grid.data);
    const auto a = std::max_element(g.data.begin(), g.data.end()) - g.data.begin();
    const auto b = std::max_element(once.grid.data.begin(), once.grid.data.end()) - once.grid.data.begin();
    CHECK(a == b);
  }
}

TEST_CASE("constant map survives bilinear resize and back") {
  const Grid c(5, 7, 0.37);
  const Grid up = resize_map(c, 23, 11, ResizeMode::Bilinear);
  const Grid back = resize_map(up, 5, 7, ResizeMode::Bilinear);
  for (double v : back.data) CHECK(v == 0.37);
}

TEST_CASE("bilinear adjoint satisfies the dot-product identity") {
  auto rng = make_rng(9);
  for (auto [ir, ic, orr, oc] : {std::array{3, 4, 10, 13}, std::array{8, 8, 56, 56}, std::array{5, 5, 5, 5}}) {
    const Grid x = random_grid(ir, ic, rng);
    const Grid y = random_grid(orr, oc, rng);
    const Grid ax = resize_map(x, orr, oc, ResizeMode::Bilinear);
    const Grid aty = resize_bilinear_adjoint(y, ir, ic);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax.data[i] * y.data[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("match resolution is 7x7 and normalized") {
  auto rng = make_rng(4);
  const Grid m = to_match_resolution(random_grid(56, 56, rng));
  CHECK(m.rows == kMatchResolution);
  CHECK(m.cols == kMatchResolution);
  CHECK(*std::max_element(m.data.begin(), m.data.end()) == 1.0);
  CHECK(*std::min_element(m.data.begin(), m.data.end()) == 0.0);
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::SlidingWindow, Method::RISE, Method::LIME, Method::Mask})
    CHECK(parse_method(method_name(m)) == m);
  CHECK(parse_method("Sliding_Window") == Method::SlidingWindow);
  CHECK_THROWS_AS(parse_method("gradcam"), ValidationError);
}
