#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/error.hpp"
#include "simexplain/linear_scorer.hpp"
#include "simexplain/synth.hpp"
#include "simexplain/triplet_scorer.hpp"

using namespace simexplain;
using testutil::random_image;
using testutil::rel_err;

namespace {
const ImageShape kShape{12, 10, 3};

// Central differences at `coords` of the flattened query.
void check_grad(const Scorer& s, const ImageTensor& ref, const ImageTensor& q, int coords, std::uint64_t seed) {
  const auto g = s.grad_query(ref, q);
  REQUIRE(g.size() == q.size());
  auto rng = make_rng(seed, 77);
  const double eps = 1e-6;  // small enough that probes rarely straddle a ReLU kink
  for (int t = 0; t < coords; ++t) {
    const std::size_t i = rng() % q.size();
    // Keep both probes inside [0, 1].
    std::vector<double> d(q.data().begin(), q.data().end());
    d[i] = std::clamp(d[i], eps, 1.0 - eps);
    const ImageTensor base(q.shape(), d);
    auto up = d, dn = d;
    up[i] += eps;
    dn[i] -= eps;
    const double fd = (s.score(ref, ImageTensor(q.shape(), up)) - s.score(ref, ImageTensor(q.shape(), dn))) / (2 * eps);
    const double an = s.grad_query(ref, base)[i];
    INFO("coord " << i << " an " << an << " fd " << fd);
    CHECK(rel_err(an, fd) < 1e-4);
  }
}

Dataset small_synth(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_images = 64;
  spec.side = 24;
  spec.seed = seed;
  return synth_generate(spec);
}
}  // namespace

TEST_CASE("linear scorer cosine properties") {
  LinearToyScorer s(kShape, LinearToyOptions{});
  auto rng = make_rng(1);
  const auto a = random_image(kShape, rng), b = random_image(kShape, rng);
  CHECK(s.score(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.score(a, b) == s.score(b, a));
  std::vector<double> half(b.data().begin(), b.data().end());
  for (auto& v : half) v *= 0.25;
  CHECK(s.score(a, ImageTensor(kShape, half)) == doctest::Approx(s.score(a, b)).epsilon(1e-6));
  const auto ea = s.embed(a).data;
  std::vector<double> neg(ea);
  for (auto& v : neg) v = -v;
  CHECK(cosine(ea, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("score_batch equals repeated single calls") {
  LinearToyScorer s(kShape, LinearToyOptions{});
  auto rng = make_rng(2);
  const auto r = random_image(kShape, rng), q = random_image(kShape, rng);
  const auto three = s.score_batch(r, std::vector<ImageTensor>{q, q, q});
  CHECK(three[0] == three[1]);
  CHECK(three[1] == three[2]);
  std::vector<ImageTensor> many;
  for (int i = 0; i < 200; ++i) many.push_back(random_image(kShape, rng));
  const auto batch = s.score_batch(r, many);
  for (int i = 0; i < 200; ++i) CHECK(batch[i] == s.score(r, many[i]));
}

TEST_CASE("occluding the planted region lowers the self-similarity") {
  LinearToyOptions o;
  o.plant = Rect{2, 2, 5, 4};
  o.background_scale = 0.05;
  LinearToyScorer s(kShape, o);
  auto rng = make_rng(3);
  const auto x = random_image(kShape, rng);
  Grid keep(kShape.height, kShape.width, 1.0);
  for (int y = 2; y < 7; ++y)
    for (int c = 2; c < 6; ++c) keep(y, c) = 0.0;
  CHECK(s.score(x, blend(x, keep)) < s.score(x, x));
}

TEST_CASE("linear scorer gradient") {
  LinearToyScorer s(kShape, LinearToyOptions{});
  auto rng = make_rng(4);
  for (int t = 0; t < 3; ++t) check_grad(s, random_image(kShape, rng), random_image(kShape, rng), 10, t);
  const ImageTensor zero(kShape);
  for (double v : s.grad_query(random_image(kShape, rng), zero)) CHECK(std::isfinite(v));
}

TEST_CASE("shape mismatch is rejected") {
  LinearToyScorer s(kShape, LinearToyOptions{});
  auto rng = make_rng(5);
  CHECK_THROWS_AS(s.score(random_image(kShape, rng), random_image({12, 10, 1}, rng)), InvalidArgument);
}

TEST_CASE("triplet scorer: deterministic training, held-out separation, gradient") {
  const Dataset ds = small_synth(11);
  TripletConfig cfg;
  cfg.relevant_attributes = SyntheticSpec{}.resolved_relevant();
  cfg.seed = 11;
  const auto a = TripletToyScorer::train(ds, cfg);
  const auto b = TripletToyScorer::train(ds, cfg);
  CHECK(std::equal(a.weight().begin(), a.weight().end(), b.weight().begin(), b.weight().end()));

  double sim = 0, dis = 0;
  int ns = 0, nd = 0;
  const auto test = ds.images_in(Split::Test);
  const int A = static_cast<int>(ds.num_attributes());
  for (auto i : test)
    for (auto j : test) {
      if (i >= j) continue;
      bool share = false;
      for (int r : cfg.relevant_attributes) share = share || (ds.labels[i * A + r] && ds.labels[j * A + r]);
      const double s = a.score(ds.images[i], ds.images[j]);
      (share ? sim : dis) += s;
      ++(share ? ns : nd);
    }
  REQUIRE(ns > 0);
  REQUIRE(nd > 0);
  CHECK(sim / ns > dis / nd);

  CHECK(a.score(ds.images[0], ds.images[1]) == a.score(ds.images[1], ds.images[0]));
  check_grad(a, ds.images[2], ds.images[3], 10, 1);
  check_grad(a, ds.images[4], ds.images[5], 10, 2);
}

TEST_CASE("triplet config validation") {
  const Dataset ds = small_synth(12);
  TripletConfig cfg;
  CHECK_THROWS_AS(TripletToyScorer::train(ds, cfg), InvalidArgument);
  cfg.relevant_attributes = {99};
  CHECK_THROWS_AS(TripletToyScorer::train(ds, cfg), InvalidArgument);
}
