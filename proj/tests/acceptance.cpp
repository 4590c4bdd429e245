// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--only 1,3,...] [--work DIR] [--stub PATH]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "simexplain/attrmodel.hpp"
#include "simexplain/config.hpp"
#include "simexplain/discovery.hpp"
#include "simexplain/eval.hpp"
#include "simexplain/external_scorer.hpp"
#include "simexplain/io.hpp"
#include "simexplain/lasso.hpp"
#include "simexplain/linear_scorer.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/pipeline.hpp"
#include "simexplain/rng.hpp"
#include "simexplain/saliency.hpp"
#include "simexplain/synth.hpp"
#include "spdlog/spdlog.h"

using namespace simexplain;
namespace fs = std::filesystem;

namespace {

// RISE budget per discovery map; discovery computes ~15 maps per pool image.
constexpr int kDiscoveryMasks = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

ImageTensor random_image(ImageShape s, Rng& rng) {
  std::vector<double> d(s.size());
  for (auto& v : d) v = uniform01(rng);
  return ImageTensor(s, std::move(d));
}

Grid random_grid(int r, int c, Rng& rng) {
  Grid g(r, c);
  for (auto& v : g.data) v = uniform01(rng);
  return g;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

std::string line(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1. insertion/deletion against brute force --------------------------

// Exhaustive curve: order pixels by a selection pass over the map (ties to
// the lower raster index), rebuild every step image from scratch.
double brute_auc(const Scorer& s, const ImageTensor& ref, const ImageTensor& q, const Grid& map, bool insertion) {
  const int h = q.height(), w = q.width(), ch = q.channels();
  const std::size_t P = static_cast<std::size_t>(h) * w;
  std::vector<bool> taken(P, false);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < P; ++k) {
    std::size_t best = P;
    for (std::size_t i = 0; i < P; ++i)
      if (!taken[i] && (best == P || map.data[i] > map.data[best])) best = i;
    taken[best] = true;
    order.push_back(best);
  }
  std::vector<double> y;
  for (std::size_t k = 0; k <= P; ++k) {
    std::vector<double> img(q.size());
    for (std::size_t i = 0; i < P; ++i) {
      const bool revealed = std::find(order.begin(), order.begin() + k, i) != order.begin() + k;
      const bool keep = insertion ? revealed : !revealed;
      for (int c = 0; c < ch; ++c) img[i * ch + c] = keep ? q.data()[i * ch + c] : 0.0;
    }
    y.push_back(s.score(ref, ImageTensor(q.shape(), img)));
  }
  const double lo = *std::min_element(y.begin(), y.end()), hi = *std::max_element(y.begin(), y.end());
  if (hi - lo <= 0) return 0.5;
  double auc = 0;
  for (std::size_t k = 0; k < P; ++k) auc += 0.5 * ((y[k] - lo) + (y[k + 1] - lo)) / (hi - lo) / P;
  (void)w;
  return auc;
}

Outcome criterion1() {
  const ImageShape sh{4, 4, 3};
  double worst = 0;
  for (int inst = 0; inst < 50; ++inst) {
    auto rng = make_rng(1000 + inst);
    LinearToyOptions o;
    o.dim = 2 + inst % 5;
    o.seed = 77 + inst;
    const LinearToyScorer s(sh, o);
    const auto ref = random_image(sh, rng), q = random_image(sh, rng);
    Grid g = random_grid(4, 4, rng);
    if (inst % 5 == 0) g.data[3] = g.data[9];  // exercise the raster tie-break
    const auto map = make_saliency_map(g, Method::RISE, true);
    const Grid stored = map.to_grid();
    const double step = 1.0 / 16.0;
    worst = std::max(worst, std::abs(insertion_curve(s, ref, q, map, step).auc - brute_auc(s, ref, q, stored, true)));
    worst = std::max(worst, std::abs(deletion_curve(s, ref, q, map, step).auc - brute_auc(s, ref, q, stored, false)));
  }
  return {worst <= 1e-9, line("max |auc - brute| = %.3g over 50 instances (tol 1e-9)", worst)};
}

// ---- 2. gradient checks --------------------------------------------------

Outcome criterion2() {
  double worst_mask = 0, worst_head = 0;
  const ImageShape sh{28, 28, 3};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LinearToyOptions o;
    o.seed = seed;
    o.plant = Rect{6, 6, 14, 14};
    o.background_scale = 0.3;
    const LinearToyScorer s(sh, o);
    auto rng = make_rng(seed, 2);
    const auto r = random_image(sh, rng), q = random_image(sh, rng);
    MaskConfig mc;
    MaskObjective obj(s, r, q, mc, seed);
    Grid mq = random_grid(mc.grid, mc.grid, rng), mr = random_grid(mc.grid, mc.grid, rng);
    Grid gq, gr;
    obj.value_and_grad(mq, &mr, gq, &gr);
    const double eps = 1e-5;
    for (int t = 0; t < 10; ++t) {
      Grid& m = t % 2 ? mr : mq;
      const std::size_t i = rng() % m.size();
      const double keep = m.data[i];
      m.data[i] = keep + eps;
      const double up = obj.value(mq, &mr);
      m.data[i] = keep - eps;
      const double dn = obj.value(mq, &mr);
      m.data[i] = keep;
      worst_mask = std::max(worst_mask, rel_err(t % 2 ? gr.data[i] : gq.data[i], (up - dn) / (2 * eps)));
    }

    // Head gradient of huber + lambda * heatmap.
    const ImageShape ash{21, 21, 3};
    AttributeModel model;
    model.extractor = FeatureExtractor(ash, 6, 3, seed);
    model.feat_mean.assign(6, 0.0);
    model.feat_std.assign(6, 1.0);
    model.n_attributes = 4;
    std::normal_distribution<double> nd(0.0, 0.3);
    model.head.resize(24);
    model.bias.resize(4);
    for (auto& v : model.head) v = nd(rng);
    for (auto& v : model.bias) v = nd(rng);
    std::vector<FeatureGrid> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(model.features(random_image(ash, rng)));
    std::vector<AttrSample> batch(3);
    for (int i = 0; i < 3; ++i) {
      std::vector<std::uint8_t> row{static_cast<std::uint8_t>(i != 1), 1, static_cast<std::uint8_t>(i == 2), 0};
      batch[i].features = &feats[i];
      batch[i].labels = scaled_labels(row);
      for (int a = 0; a < 4; ++a)
        if (row[a]) batch[i].gt.push_back(a);
      for (int k = 0; k < 2; ++k) batch[i].saliency.push_back(normalize_map(random_grid(7, 7, rng)).grid);
    }
    const double lambda = 0.5;  // large enough that the heatmap term matters
    std::vector<double> gh, gb;
    attr_loss_and_grad(model, batch, lambda, &gh, &gb);
    const double e2 = 1e-6;
    for (int t = 0; t < 10; ++t) {
      const bool on_bias = t % 5 == 4;
      auto& vec = on_bias ? model.bias : model.head;
      const std::size_t i = rng() % vec.size();
      const double keep = vec[i];
      vec[i] = keep + e2;
      const double up = attr_loss_and_grad(model, batch, lambda, nullptr, nullptr);
      vec[i] = keep - e2;
      const double dn = attr_loss_and_grad(model, batch, lambda, nullptr, nullptr);
      vec[i] = keep;
      worst_head = std::max(worst_head, rel_err(on_bias ? gb[i] : gh[i], (up - dn) / (2 * e2)));
    }
  }
  return {worst_mask < 1e-4 && worst_head < 1e-4,
          line("max rel err mask %.2e, head %.2e (tol 1e-4, 10 coords x 5 seeds)", worst_mask, worst_head)};
}

// ---- 3. planted-region localization -------------------------------------

Outcome criterion3() {
  const ImageShape sh{56, 56, 3};
  const Rect plant{16, 20, 20, 20};
  double mass_in = 0, gap = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LinearToyOptions o;
    o.seed = seed;
    o.plant = plant;
    o.background_scale = 0.0;
    const LinearToyScorer s(sh, o);
    auto rng = make_rng(seed, 3);
    const auto q = random_image(sh, rng);
    SaliencyConfig c;
    c.method = Method::RISE;
    c.fixed_reference = true;
    c.seed = seed;
    c.rise.n_masks = 2000;
    c.rise.grid = 8;
    c.rise.keep_prob = 0.5;
    const auto map = generate(s, q, q, c);
    const Grid up = resize_map(map.to_grid(), sh.height, sh.width, ResizeMode::Bilinear);
    std::vector<std::size_t> idx(up.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return up.data[a] > up.data[b]; });
    const std::size_t top = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(up.size())));
    double inside = 0, total = 0;
    for (std::size_t k = 0; k < top; ++k) {
      const double v = up.data[idx[k]];
      total += v;
      if (plant.contains(static_cast<int>(idx[k] / sh.width), static_cast<int>(idx[k] % sh.width))) inside += v;
    }
    mass_in += (total > 0 ? inside / total : 0.0) / 5.0;
    const auto rnd = make_saliency_map(random_grid(map.rows, map.cols, rng), Method::RISE, true);
    gap += (insertion_curve(s, q, q, map).auc - insertion_curve(s, q, q, rnd).auc) / 5.0;
  }
  return {mass_in >= 0.7 && gap >= 0.1,
          line("top-5%% mass inside plant %.3f (>= 0.70), insertion AUC gain over random %.3f (>= 0.10)", mass_in, gap)};
}

// ---- 4. lasso ------------------------------------------------------------

Outcome criterion4() {
  auto rng = make_rng(4);
  std::normal_distribution<double> nd;
  double worst = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 25 + 3 * inst, p = 2 + inst % 7;
    // Gram-Schmidt, then scale so X^T X / n = I.
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
      for (auto& v : cols[j]) v /= std::sqrt(nrm);
    }
    std::vector<double> x(static_cast<std::size_t>(n) * p), y(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) x[i * p + j] = cols[j][i] * std::sqrt(static_cast<double>(n));
    for (auto& v : y) v = 2.0 * nd(rng);
    LassoOptions o;
    o.alpha = 0.03 + 0.04 * inst;
    o.fit_intercept = false;
    const auto r = lasso_coordinate_descent(x, y, n, p, o);
    for (int j = 0; j < p; ++j) {
      double z = 0;
      for (int i = 0; i < n; ++i) z += x[i * p + j] * y[i];
      z /= n;
      worst = std::max(worst, std::abs(r.coef[j] - std::copysign(std::max(std::abs(z) - o.alpha, 0.0), z)));
    }
  }
  return {worst <= 1e-8, line("max |coef - soft threshold| = %.3g over 20 instances (tol 1e-8)", worst)};
}

// ---- 5 / 7 / 10. pipeline runs ------------------------------------------

struct PipelineRuns {
  RunConfig cfg;
  fs::path a, b;
  PipelineResult first;
  double first_seconds = 0;
};

Outcome criterion5(const PipelineRuns& runs) {
  const auto& r = runs.first.report;
  auto get = [](const std::map<std::string, double>& m, const std::string& k) {
    const auto it = m.find(k);
    return it == m.end() ? std::nan("") : it->second;
  };
  const double map_sane = get(r.map, "sane/val"), map_clf = get(r.map, "classifier/val");
  const double t_conf = get(r.top1, "confidence"), t_sane = get(r.top1, "sane");
  const double rm_rnd = get(r.removal, "random"), rm_conf = get(r.removal, "confidence"),
               rm_sane = get(r.removal, "sane");
  const bool a = map_sane >= map_clf;
  const bool b = t_sane - t_conf >= 0.02;
  const bool c = rm_rnd < rm_conf && rm_conf < rm_sane;
  const bool fast = runs.first_seconds < 600;
  return {a && b && c && fast,
          line("(a) %s val mAP %.4f vs baseline %.4f; (b) %s top-1 %.3f vs confidence %.3f; "
              "(c) %s removal random %.2f < confidence %.2f < sane %.2f; runtime %.0f s",
              a ? "ok" : "FAILED", map_sane, map_clf, b ? "ok" : "FAILED", t_sane, t_conf, c ? "ok" : "FAILED",
              rm_rnd, rm_conf, rm_sane, runs.first_seconds)};
}

Outcome criterion6() {
  const double h = huber_loss(std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, 0.0});
  const double z = huber_loss(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7});
  const double hm = heatmap_loss(std::vector<Grid>{Grid(7, 7, 1.0)}, std::vector<Grid>{Grid(7, 7, 0.0)});
  const bool ok = std::abs(h - 0.16) <= 1e-15 && z == 0.0 && hm == 7.0;
  return {ok, line("huber([.6,.4],[1,0]) = %.17g (0.16), huber(x,x) = %g, heatmap(ones, zeros) at 7x7 = %.17g (7)", h, z,
                  hm)};
}

Outcome criterion7(const PipelineRuns& runs) {
  std::size_t compared = 0, differ = 0;
  std::vector<fs::path> files{"report.json"};
  for (const auto& e : fs::recursive_directory_iterator(runs.a))
    if (e.is_regular_file() && e.path().extension() == ".smap") files.push_back(fs::relative(e.path(), runs.a));
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    ++compared;
    if (!fs::exists(runs.b / f) || slurp(runs.a / f) != slurp(runs.b / f)) ++differ;
  }
  return {differ == 0 && compared > 1,
          line("%zu files compared (report.json + SMAP1), %zu differ", compared, differ)};
}

Outcome criterion10(const PipelineRuns& runs) {
  const auto ds = load_dataset(runs.a / "dataset" / "manifest.json");
  const auto scorer = make_scorer(runs.cfg, ds);
  const std::size_t n = std::min<std::size_t>(100, ds.pairs.size());
  std::vector<double> cos(n);
  for_each_chunk(n, 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& p = ds.pairs[i];
      const auto& q = ds.image(p.query_id);
      const auto& r = ds.image(p.reference_id);
      const Grid mq = generate(*scorer, r, q, runs.cfg.saliency).to_grid();
      const Grid mr = generate(*scorer, q, r, runs.cfg.saliency).to_grid();
      double ab = 0, aa = 0, bb = 0;
      for (std::size_t k = 0; k < mq.size(); ++k) {
        ab += mq.data[k] * mr.data[k];
        aa += mq.data[k] * mq.data[k];
        bb += mr.data[k] * mr.data[k];
      }
      cos[i] = aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 1.0;
    }
  });
  const auto differ = static_cast<std::size_t>(std::count_if(cos.begin(), cos.end(), [](double c) { return c < 0.99; }));
  const double frac = n ? static_cast<double>(differ) / static_cast<double>(n) : 0.0;
  return {n == 100 && frac >= 0.9, line("%zu of %zu pairs have cos(m_q, m_r) < 0.99 (%.0f%%, need >= 90%%)", differ, n,
                                       100 * frac)};
}

// ---- 8. protocol round trip ---------------------------------------------

Outcome criterion8(const std::string& stub) {
  const ImageShape sh{56, 56, 3};
  LinearToyOptions o;
  o.dim = 8;
  o.seed = 1;
  const LinearToyScorer local(sh, o);
  const ExternalScorer ext({stub, "--dim", "8", "--seed", "1", "--max-batch", "64"}, 2);
  auto rng = make_rng(8);
  double worst = 0;
  std::size_t pairs = 0;
  // 5 references x 100 queries: each batch is split into 64 + 36.
  for (int r = 0; r < 5; ++r) {
    const auto ref = random_image(sh, rng);
    std::vector<ImageTensor> qs;
    for (int i = 0; i < 100; ++i) qs.push_back(random_image(sh, rng));
    const auto a = ext.score_batch(ref, qs), b = local.score_batch(ref, qs);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    pairs += a.size();
  }
  return {pairs == 500 && worst <= 1e-6,
          line("%zu pairs, max |external - in-process| = %.3g (tol 1e-6), batches chunked at 64", pairs, worst)};
}

// ---- 9. discovery --------------------------------------------------------

Outcome criterion9() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.propagate_seed();
    cfg.discovery.saliency.rise.n_masks = kDiscoveryMasks;
    const auto ds = synth_generate(cfg.synth);
    const auto scorer = make_scorer(cfg, ds);
    cfg.discovery.n_clusters = static_cast<int>(ds.num_attributes());
    std::vector<std::size_t> pool(ds.num_images());
    std::iota(pool.begin(), pool.end(), 0);
    const auto test = ds.pairs_in(Split::Test);
    const auto assign = discover(ds, pool, *scorer, cfg.discovery);
    const auto rem = removal_eval_discovered(assign, ds, pool, *scorer, test, cfg.discovery);
    const double purity = cluster_purity(assign, ds);
    const bool pass = rem.patch > rem.random && purity >= 0.9;
    ok = ok && pass;
    detail += line("%sseed %d: patch %.2f vs random %.2f, purity %.3f", seed > 1 ? "; " : "", static_cast<int>(seed),
                  100 * rem.patch, 100 * rem.random, purity);
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "simexplain_acceptance").string();
  std::string stub = SCORER_STUB_PATH;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--work", work, "scratch directory for pipeline runs");
  app.add_option("--stub", stub, "external scorer stub binary");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
  int failed = 0;
  auto report = [&](int k, double limit_s, const std::function<Outcome()>& fn) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s >= limit_s) {
      o.pass = false;
      o.detail += line("; runtime %.1f s over the %.0f s limit", s, limit_s);
    }
    failed += !o.pass;
    std::printf("%s criterion %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k, o.detail.c_str(), s);
    std::fflush(stdout);
  };

  report(1, 5, criterion1);
  report(2, 30, criterion2);
  report(3, 60, criterion3);
  report(4, 0, criterion4);

  PipelineRuns runs;
  if (wanted(5) || wanted(7) || wanted(10)) {
    runs.cfg.propagate_seed();
    runs.a = fs::path(work) / "run_a";
    runs.b = fs::path(work) / "run_b";
    fs::remove_all(runs.a);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      runs.first = run_pipeline(runs.cfg, runs.a);
    } catch (const std::exception& e) {
      std::printf("pipeline run failed: %s\n", e.what());
    }
    runs.first_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  report(5, 0, [&] { return criterion5(runs); });
  report(6, 0, criterion6);
  report(7, 0, [&] {
    fs::remove_all(runs.b);
    run_pipeline(runs.cfg, runs.b);
    return criterion7(runs);
  });
  report(8, 0, [&] { return criterion8(stub); });
  report(9, 0, criterion9);
  report(10, 0, [&] { return criterion10(runs); });

  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
