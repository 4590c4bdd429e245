#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/kernels.hpp"
#include "simexplain/saliency.hpp"

using namespace simexplain;
using testutil::random_grid;
using testutil::random_image;

TEST_CASE("serial and parallel kernels agree bit for bit") {
  auto rng = make_rng(1);
  const ImageShape sh{9, 11, 3};
  std::vector<ImageTensor> imgs;
  for (int i = 0; i < 150; ++i) imgs.push_back(random_image(sh, rng));
  std::vector<double> w(5 * sh.size());
  for (auto& v : w) v = uniform01(rng) - 0.5;
  CHECK(kernels::linear_embed_batch(w, 5, imgs, Exec::Serial) == kernels::linear_embed_batch(w, 5, imgs, Exec::Parallel));

  std::vector<double> proj(7 * 3), bias(7);
  for (auto& v : proj) v = uniform01(rng) - 0.5;
  for (auto& v : bias) v = uniform01(rng) - 0.5;
  CHECK(kernels::relu_pool_batch(proj, bias, 3, imgs, Exec::Serial) ==
        kernels::relu_pool_batch(proj, bias, 3, imgs, Exec::Parallel));

  std::vector<double> rows(300 * 6), ref(6);
  for (auto& v : rows) v = uniform01(rng);
  for (auto& v : ref) v = uniform01(rng);
  CHECK(kernels::cosine_rows(ref, rows, 6, Exec::Serial) == kernels::cosine_rows(ref, rows, 6, Exec::Parallel));

  std::vector<Grid> masks;
  std::vector<double> weights;
  for (int i = 0; i < 200; ++i) {
    masks.push_back(random_grid(9, 11, rng));
    weights.push_back(uniform01(rng));
  }
  CHECK(kernels::weighted_mask_sum(weights, masks, Exec::Serial).data ==
        kernels::weighted_mask_sum(weights, masks, Exec::Parallel).data);

  const auto windows = window_lattice(30, 30, 49, 0.1);
  std::vector<double> scores(windows.size());
  for (auto& v : scores) v = uniform01(rng);
  const auto cs = kernels::occlusion_coverage(windows, scores, 30, 30, Exec::Serial);
  const auto cp = kernels::occlusion_coverage(windows, scores, 30, 30, Exec::Parallel);
  CHECK(cs.score_sum.data == cp.score_sum.data);
  CHECK(cs.count.data == cp.count.data);
}

TEST_CASE("kernels match direct evaluation") {
  auto rng = make_rng(2);
  const ImageShape sh{4, 5, 3};
  const auto img = random_image(sh, rng);
  std::vector<double> proj(4 * 3), bias(4);
  for (auto& v : proj) v = uniform01(rng) - 0.5;
  for (auto& v : bias) v = uniform01(rng) - 0.5;
  std::vector<double> out(4);
  kernels::relu_pool(proj, bias, 3, img.data(), out);
  for (int f = 0; f < 4; ++f) {
    double acc = 0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        double z = bias[f];
        for (int c = 0; c < 3; ++c) z += proj[f * 3 + c] * img.at(y, x, c);
        acc += z > 0 ? z : 0;
      }
    CHECK(out[f] == doctest::Approx(acc / 20).epsilon(1e-13));
  }

  const std::vector<kernels::Window> wins{{0, 0, 2}, {1, 1, 3}};
  const std::vector<double> sc{0.5, 2.0};
  const auto cov = kernels::occlusion_coverage(wins, sc, 4, 4, Exec::Serial);
  CHECK(cov.count(0, 0) == 1);
  CHECK(cov.count(1, 1) == 2);
  CHECK(cov.score_sum(1, 1) == 2.5);
  CHECK(cov.count(3, 3) == 1);
  CHECK(cov.score_sum(3, 3) == 2.0);
  CHECK(cov.count(3, 0) == 0);

  std::vector<Grid> masks{Grid(2, 2, {1, 2, 3, 4}), Grid(2, 2, {0, 1, 0, 1})};
  const std::vector<double> w{2.0, -1.0};
  CHECK(kernels::weighted_mask_sum(w, masks, Exec::Serial).data == std::vector<double>{2, 3, 6, 7});
}
