#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/attrmodel.hpp"
#include "simexplain/error.hpp"
#include "simexplain/synth.hpp"

using namespace simexplain;
using testutil::random_grid;
using testutil::random_image;

namespace {
const ImageShape kShape{21, 21, 3};

AttributeModel toy_model(int attrs, std::uint64_t seed, double head_scale) {
  AttributeModel m;
  m.extractor = FeatureExtractor(kShape, 6, 3, seed);
  m.feat_mean.assign(6, 0.0);
  m.feat_std.assign(6, 1.0);
  m.n_attributes = attrs;
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> nd(0.0, head_scale);
  m.head.resize(static_cast<std::size_t>(attrs) * 6);
  m.bias.resize(attrs);
  for (auto& v : m.head) v = nd(rng);
  for (auto& v : m.bias) v = nd(rng);
  return m;
}
}  // namespace

TEST_CASE("zero head gives uniform confidences; bias shift is invisible") {
  auto m = toy_model(5, 1, 0.0);
  auto rng = make_rng(2);
  const auto img = random_image(kShape, rng);
  for (double c : m.forward(img).confidences) CHECK(c == doctest::Approx(0.2).epsilon(1e-12));

  m = toy_model(5, 3, 0.5);
  const auto a = m.forward(img).confidences;
  for (auto& b : m.bias) b += 3.25;
  const auto b = m.forward(img).confidences;
  for (int i = 0; i < 5; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("confidences sum to one and maps sit at match resolution") {
  auto rng = make_rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto m = toy_model(3 + t % 5, t, 2.0);
    const auto p = m.forward(random_image(kShape, rng));
    CHECK(std::accumulate(p.confidences.begin(), p.confidences.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    REQUIRE(p.maps.size() == static_cast<std::size_t>(m.n_attributes));
    CHECK(p.maps[0].rows == kMatchResolution);
  }
}

TEST_CASE("huber loss examples") {
  const std::vector<double> c{0.3, 0.7};
  CHECK(huber_loss(c, c) == 0.0);
  CHECK(huber_loss(std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, 0.0}) == doctest::Approx(0.16).epsilon(1e-15));
}

TEST_CASE("softmax confidences with scaled labels stay in the quadratic branch") {
  auto rng = make_rng(5);
  for (int t = 0; t < 200; ++t) {
    const int A = 2 + t % 9;
    std::vector<double> logits(A), conf(A);
    for (auto& v : logits) v = 20.0 * (uniform01(rng) - 0.5);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (int i = 0; i < A; ++i) z += conf[i] = std::exp(logits[i] - mx);
    for (auto& v : conf) v /= z;
    std::vector<std::uint8_t> row(A);
    for (auto& v : row) v = uniform01(rng) < 0.4;
    row[t % A] = 1;
    const auto lab = scaled_labels(row);
    CHECK(std::accumulate(lab.begin(), lab.end(), 0.0) == doctest::Approx(1.0));
    CHECK(huber_quadratic_only(conf, lab));
  }
  CHECK_FALSE(huber_quadratic_only(std::vector<double>{-0.5}, std::vector<double>{1.0}));
  CHECK(scaled_labels(std::vector<std::uint8_t>{0, 0}).empty());
}

TEST_CASE("heatmap loss examples") {
  auto rng = make_rng(6);
  const Grid a = random_grid(7, 7, rng), b = random_grid(7, 7, rng);
  const std::vector<Grid> sal{a, b};
  CHECK(heatmap_loss(sal, std::vector<Grid>{b, random_grid(7, 7, rng), a}) == 0.0);
  CHECK(heatmap_loss(std::vector<Grid>{Grid(7, 7, 1.0)}, std::vector<Grid>{Grid(7, 7, 0.0)}) == 7.0);
  CHECK(heatmap_loss(sal, std::vector<Grid>{}) == 0.0);
  CHECK_THROWS_AS(heatmap_loss(sal, std::vector<Grid>{Grid(5, 5)}), InvalidArgument);

  // The min never exceeds the distance to the first gt map.
  for (int t = 0; t < 30; ++t) {
    std::vector<Grid> s, g;
    for (int i = 0; i < 1 + t % 4; ++i) s.push_back(random_grid(7, 7, rng));
    for (int i = 0; i < 1 + t % 3; ++i) g.push_back(random_grid(7, 7, rng));
    double first = 0;
    for (const auto& m : s) {
      double d = 0;
      for (std::size_t k = 0; k < m.size(); ++k) d += (m.data[k] - g[0].data[k]) * (m.data[k] - g[0].data[k]);
      first += std::sqrt(d);
    }
    CHECK(heatmap_loss(s, g) <= first / s.size() + 1e-12);
  }
}

TEST_CASE("loss gradient w.r.t. the head matches central differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto model = toy_model(4, seed, 0.3);
    auto rng = make_rng(seed, 9);
    std::vector<FeatureGrid> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(model.features(random_image(kShape, rng)));
    std::vector<AttrSample> batch(3);
    for (int i = 0; i < 3; ++i) {
      std::vector<std::uint8_t> row{static_cast<std::uint8_t>(i == 0), 1, static_cast<std::uint8_t>(i == 2), 0};
      batch[i].features = &feats[i];
      batch[i].labels = scaled_labels(row);
      for (int a = 0; a < 4; ++a)
        if (row[a]) batch[i].gt.push_back(a);
      batch[i].saliency = {normalize_map(random_grid(7, 7, rng)).grid, normalize_map(random_grid(7, 7, rng)).grid};
    }
    const double lambda = 0.5;
    std::vector<double> gh, gb;
    attr_loss_and_grad(model, batch, lambda, &gh, &gb);
    const double eps = 1e-6;
    for (int t = 0; t < 10; ++t) {
      const bool on_bias = t % 5 == 4;
      auto& vec = on_bias ? model.bias : model.head;
      const std::size_t i = rng() % vec.size();
      const double keep = vec[i];
      vec[i] = keep + eps;
      const double up = attr_loss_and_grad(model, batch, lambda, nullptr, nullptr);
      vec[i] = keep - eps;
      const double dn = attr_loss_and_grad(model, batch, lambda, nullptr, nullptr);
      vec[i] = keep;
      const double an = on_bias ? gb[i] : gh[i];
      CHECK(testutil::rel_err(an, (up - dn) / (2 * eps)) < 1e-4);
    }
  }
}

TEST_CASE("training is deterministic and saves round trip") {
  SyntheticSpec spec;
  spec.n_images = 40;
  spec.side = 28;
  const Dataset ds = synth_generate(spec);
  AttrTrainConfig cfg;
  cfg.epochs = 3;
  cfg.filters = 8;
  cfg.seed = 3;
  SaliencyBank bank;
  for (auto i : ds.images_in(Split::Train)) {
    auto rng = make_rng(i);
    bank[ds.ids[i]].push_back(make_saliency_map(random_grid(8, 8, rng), Method::RISE, true));
  }
  const auto a = train_attribute_model(ds, bank, cfg);
  const auto b = train_attribute_model(ds, bank, cfg);
  CHECK(a.model.head == b.model.head);
  CHECK(a.model.bias == b.model.bias);
  CHECK(a.heatmap_term_used);

  const auto dir = std::filesystem::temp_directory_path() / "sx_attr";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_model(dir / "m.sane", a.model);
  const auto back = load_model(dir / "m.sane");
  REQUIRE(back.head.size() == a.model.head.size());
  for (std::size_t i = 0; i < back.head.size(); ++i)
    CHECK(back.head[i] == static_cast<double>(static_cast<float>(a.model.head[i])));
  const auto img = ds.images[0];
  const auto pa = a.model.forward(img).confidences, pb = back.forward(img).confidences;
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-5));

  save_bank(dir / "bank", bank);
  const auto bb = load_bank(dir / "bank");
  CHECK(bb.size() == bank.size());
  CHECK(bb.begin()->second.front() == bank.begin()->second.front());
}

TEST_CASE("train config defaults and validation") {
  AttrTrainConfig c;
  CHECK(c.epochs == 300);
  CHECK(c.lr == 5e-4);
  CHECK(c.lambda == 5e-3);
  CHECK(c.k == 5);
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
