#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/error.hpp"
#include "simexplain/explain.hpp"

using namespace simexplain;

namespace {
PairCase make(std::vector<double> conf, std::vector<double> match, std::vector<std::uint8_t> gt) {
  PairCase c;
  c.confidence = std::move(conf);
  c.map_match = std::move(match);
  c.gt = std::move(gt);
  return c;
}
}  // namespace

TEST_CASE("prior smoothing examples") {
  CHECK(prior_from_counts(std::vector<std::size_t>{7}).p == std::vector<double>{1.0});
  const auto p = prior_from_counts(std::vector<std::size_t>{30, 10}).p;
  CHECK(p[0] == doctest::Approx(31.0 / 42.0));
  CHECK(p[1] == doctest::Approx(11.0 / 42.0));
  CHECK(p[0] == doctest::Approx(0.738).epsilon(1e-3));
}

TEST_CASE("prior counts the best-matching ground-truth attribute") {
  std::vector<PairCase> cases{make({0.5, 0.5, 0}, {0.9, 0.1, 1.0}, {1, 1, 0}),
                              make({0.5, 0.5, 0}, {0.2, 0.8, 0.0}, {1, 1, 0}),
                              make({0.5, 0.5, 0}, {0.3, 0.8, 0.0}, {0, 0, 0})};
  const auto r = estimate_prior(cases, 3);
  CHECK(r.counts == std::vector<std::size_t>{1, 1, 0});
  CHECK(r.skipped == 1);
  double sum = 0;
  for (double v : r.prior.p) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-term weightings reproduce the single rankings") {
  auto rng = make_rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> conf(6), match(6);
    for (auto& v : conf) v = uniform01(rng);
    for (auto& v : match) v = uniform01(rng);
    const Prior prior{std::vector<double>(6, 1.0 / 6)};
    CHECK(rank_attributes(explanation_scores(conf, match, prior, {0, 1, 0})) == rank_attributes(match));
    CHECK(rank_attributes(explanation_scores(conf, match, prior, {1, 0, 0})) == rank_attributes(conf));
  }
}

TEST_CASE("explanation score is affine in the prior term") {
  auto rng = make_rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> conf(5), match(5), p(5);
    for (auto& v : conf) v = uniform01(rng);
    for (auto& v : match) v = uniform01(rng);
    for (auto& v : p) v = uniform01(rng);
    const PhiWeights phi{0.2, 0.7, 0.1};
    Prior scaled{p};
    for (auto& v : scaled.p) v *= 4.0;
    const auto a = explanation_scores(conf, match, Prior{p}, phi);
    const auto b = explanation_scores(conf, match, scaled, {0.2, 0.7, 0.1 / 4.0});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    auto shifted = a;
    for (auto& v : shifted) v += 12.5;
    CHECK(rank_attributes(shifted) == rank_attributes(a));
    // Joint affine transform of the three terms keeps the top-1.
    std::vector<double> c2(conf), m2(match), p2(p);
    for (auto* v : {&c2, &m2, &p2})
      for (auto& x : *v) x = 2.0 * x + 0.25;
    CHECK(rank_attributes(explanation_scores(c2, m2, Prior{p2}, phi)).front() == rank_attributes(a).front());
  }
}

TEST_CASE("rank ties go to the lower index") {
  CHECK(rank_attributes(std::vector<double>{0.2, 0.5, 0.5, 0.1}) == std::vector<int>{1, 2, 0, 3});
}

TEST_CASE("degenerate saliency gives zero map match") {
  AttrPrediction p;
  p.maps = {Grid(7, 7, 1.0), Grid(7, 7, 2.0)};
  for (int i = 0; i < 49; ++i) p.maps[0].data[i] = i;
  const auto m = map_match_scores(Grid(7, 7, 0.0), p);
  CHECK(m == std::vector<double>{0.0, 0.0});
}

TEST_CASE("fit_phi: confident-perfect validation keeps the confidence ranking") {
  auto rng = make_rng(3);
  std::vector<PairCase> cases;
  for (int t = 0; t < 40; ++t) {
    std::vector<double> conf(4), match(4);
    std::vector<std::uint8_t> gt(4, 0);
    const int good = t % 4;
    gt[good] = 1;
    for (auto& v : conf) v = 0.1 * uniform01(rng);
    conf[good] = 0.9;
    for (auto& v : match) v = uniform01(rng);
    match[good] = 0.0;
    cases.push_back(make(conf, match, gt));
  }
  const Prior prior{std::vector<double>(4, 0.25)};
  const auto fit = fit_phi(cases, prior);
  CHECK(fit.accuracy == 1.0);
  for (const auto& c : cases)
    CHECK(rank_attributes(explanation_scores(c, prior, fit.phi)).front() == rank_attributes(c.confidence).front());
  CHECK(ranking_accuracy(cases, prior, {0, 1, 0}) < 0.5);

  const auto coarse = fit_phi(cases, prior, 1.0);
  CHECK_NOTHROW(coarse.phi.validate());
  CHECK(coarse.phi.phi1 + coarse.phi.phi2 > 0);
}

TEST_CASE("phi validation") {
  CHECK_THROWS_AS((PhiWeights{0, 0, 0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((PhiWeights{std::nan(""), 1, 0}.validate()), InvalidArgument);
  const PhiWeights d;
  CHECK(d.phi1 == 0.1);
  CHECK(d.phi2 == 0.9);
  CHECK(d.phi3 == 0.05);
}
