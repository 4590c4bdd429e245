#include "simexplain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "simexplain/error.hpp"
#include "simexplain/parallel.hpp"

namespace simexplain {

std::vector<std::size_t> pixel_order(const SaliencyMap& map, int height, int width) {
  const Grid up = resize_map(map.to_grid(), height, width, ResizeMode::Bilinear);
  std::vector<std::size_t> order(up.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return up.data[a] > up.data[b]; });
  return order;
}

std::size_t pixels_at_step(std::size_t k, std::size_t n_steps, std::size_t total) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(total) /
                                               static_cast<double>(n_steps)));
}

double trapezoid_auc(std::span<const double> y) {
  if (y.size() < 2) throw InvalidArgument("trapezoid_auc: need at least two points");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) area += 0.5 * (y[i] + y[i + 1]);
  return area / static_cast<double>(y.size() - 1);
}

namespace {

Curve build_curve(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                  const SaliencyMap& map, double step_frac, bool insertion) {
  if (!(step_frac > 0 && step_frac <= 1)) throw InvalidArgument("step_frac must be in (0, 1]");
  const int h = query.height(), w = query.width(), ch = query.channels();
  const auto order = pixel_order(map, h, w);
  const std::size_t total = order.size();
  const auto n_steps = static_cast<std::size_t>(std::max(1LL, std::llround(1.0 / step_frac)));

  std::vector<ImageTensor> frames;
  frames.reserve(n_steps + 1);
  auto q = query.data();
  for (std::size_t k = 0; k <= n_steps; ++k) {
    const std::size_t count = pixels_at_step(k, n_steps, total);
    std::vector<double> d = insertion ? std::vector<double>(query.size(), 0.0)
                                      : std::vector<double>(q.begin(), q.end());
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t p = order[i] * static_cast<std::size_t>(ch);
      for (int c = 0; c < ch; ++c) d[p + c] = insertion ? q[p + c] : 0.0;
    }
    frames.emplace_back(query.shape(), std::move(d));
  }
  Curve curve;
  curve.degenerate_map = map.degenerate() ||
                         std::all_of(map.data.begin(), map.data.end(),
                                     [&](float v) { return v == map.data.front(); });
  curve.scores = scorer.score_batch(ref, frames);
  const auto [lo, hi] = std::minmax_element(curve.scores.begin(), curve.scores.end());
  const double range = *hi - *lo;
  curve.flat = range == 0.0;
  curve.normalized.resize(curve.scores.size());
  for (std::size_t i = 0; i < curve.scores.size(); ++i)
    curve.normalized[i] = curve.flat ? 0.5 : (curve.scores[i] - *lo) / range;
  curve.auc = curve.flat ? 0.5 : trapezoid_auc(curve.normalized);
  return curve;
}

}  // namespace

Curve insertion_curve(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                      const SaliencyMap& map, double step_frac) {
  return build_curve(scorer, ref, query, map, step_frac, true);
}

Curve deletion_curve(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                     const SaliencyMap& map, double step_frac) {
  return build_curve(scorer, ref, query, map, step_frac, false);
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) throw InvalidArgument("average_precision: no positive items");
  return sum / static_cast<double>(hits);
}

double mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              int n_attributes, std::size_t* skipped) {
  if (n_attributes < 1 || scores.size() != labels.size() ||
      scores.size() % static_cast<std::size_t>(n_attributes) != 0)
    throw InvalidArgument("mean_average_precision: matrix shape mismatch");
  const std::size_t n = scores.size() / static_cast<std::size_t>(n_attributes);
  double total = 0.0;
  std::size_t used = 0, skip = 0;
  std::vector<double> col_s(n);
  std::vector<std::uint8_t> col_l(n);
  for (int a = 0; a < n_attributes; ++a) {
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      col_s[i] = scores[i * n_attributes + a];
      col_l[i] = labels[i * n_attributes + a];
      any = any || col_l[i];
    }
    if (!any) {
      ++skip;
      continue;
    }
    total += average_precision(col_s, col_l);
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0) throw InvalidArgument("mean_average_precision: no attribute has a positive");
  return total / static_cast<double>(used);
}

double top1_accuracy(std::span<const int> predicted,
                     std::span<const std::vector<std::uint8_t>> label_rows) {
  if (predicted.size() != label_rows.size()) throw InvalidArgument("top1_accuracy: length mismatch");
  if (predicted.empty()) throw InvalidArgument("top1_accuracy: no items");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int a = predicted[i];
    if (a < 0 || static_cast<std::size_t>(a) >= label_rows[i].size())
      throw InvalidArgument("top1_accuracy: attribute index out of range");
    hits += label_rows[i][a] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

RemovalResult attribute_removal_delta(
    const Scorer& scorer, std::span<const ImageTensor> images, std::span<const RemovalItem> items,
    std::span<const std::size_t> corpus,
    const std::function<bool(std::size_t image, int attribute)>& eligible) {
  if (!scorer.caps().can_embed) throw Unsupported("attribute removal needs scorer embeddings");
  std::vector<std::size_t> needed(corpus.begin(), corpus.end());
  for (const auto& it : items) needed.push_back(it.query);
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  for (auto i : needed)
    if (i >= images.size()) throw InvalidArgument("attribute removal: image index out of range");

  std::vector<Embedding> emb(images.size());
  for_each_chunk(needed.size(), 8, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) emb[needed[k]] = scorer.embed(images[needed[k]]);
  });

  RemovalResult res;
  std::vector<std::optional<double>> deltas(items.size());
  for_each_chunk(items.size(), 8, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto& it = items[k];
      std::size_t best = images.size();
      double best_sim = -std::numeric_limits<double>::infinity();
      for (auto c : corpus) {
        if (c == it.query || c == it.reference || !eligible(c, it.attribute)) continue;
        const double sim = cosine(emb[it.query].data, emb[c].data);
        if (sim > best_sim || (sim == best_sim && c < best)) {
          best_sim = sim;
          best = c;
        }
      }
      if (best == images.size()) continue;
      const std::vector<ImageTensor> qs{images[it.query], images[best]};
      const auto s = scorer.score_batch(images[it.reference], qs);
      deltas[k] = s[0] - s[1];
    }
  });
  double sum = 0.0;
  for (const auto& d : deltas) {
    if (!d) {
      ++res.skipped;
      continue;
    }
    res.deltas.push_back(*d);
    sum += *d;
    ++res.evaluated;
  }
  res.mean_delta = res.evaluated ? sum / static_cast<double>(res.evaluated) : 0.0;
  return res;
}

CurveSummary summarize_curves(std::span<const Curve> insertion, std::span<const Curve> deletion) {
  if (insertion.size() != deletion.size())
    throw InvalidArgument("summarize_curves: insertion and deletion counts differ");
  CurveSummary out;
  out.pairs = insertion.size();
  if (insertion.empty()) return out;
  auto mean_se = [](std::span<const Curve> cs, double& mean, double& se) {
    const double n = static_cast<double>(cs.size());
    double sum = 0.0;
    for (const auto& c : cs) sum += c.auc;
    mean = sum / n;
    double ss = 0.0;
    for (const auto& c : cs) ss += (c.auc - mean) * (c.auc - mean);
    se = cs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    mean *= 100.0;
    se *= 100.0;
  };
  mean_se(insertion, out.insertion, out.insertion_se);
  mean_se(deletion, out.deletion, out.deletion_se);
  for (std::size_t i = 0; i < insertion.size(); ++i) {
    out.flat_curves += insertion[i].flat + deletion[i].flat;
    out.degenerate_maps += insertion[i].degenerate_map;
  }
  return out;
}

std::string MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "simexplain-report";
  j["version"] = 1;
  ordered_json sal = ordered_json::object();
  for (const auto& [k, v] : saliency)
    sal[k] = {{"insertion_auc", v.insertion}, {"insertion_se", v.insertion_se},
              {"deletion_auc", v.deletion},   {"deletion_se", v.deletion_se},
              {"pairs", v.pairs},             {"flat_curves", v.flat_curves},
              {"degenerate_maps", v.degenerate_maps}};
  j["saliency"] = sal;
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : map) m[k] = v;
  j["attribute_map"] = {{"map", m}, {"skipped_attributes", map_skipped_attributes}};
  ordered_json t = ordered_json::object();
  for (const auto& [k, v] : top1) t[k] = v;
  j["top1_accuracy"] = t;
  ordered_json r = ordered_json::object();
  for (const auto& [k, v] : removal) {
    const auto sk = removal_skipped.find(k);
    r[k] = {{"delta", v}, {"skipped", sk == removal_skipped.end() ? 0 : sk->second}};
  }
  j["attribute_removal"] = r;
  if (!discovery.empty()) {
    ordered_json d = ordered_json::object();
    for (const auto& [k, v] : discovery) d[k] = v;
    j["discovery"] = d;
  }
  ordered_json f = ordered_json::object();
  for (const auto& [k, v] : fit) f[k] = v;
  j["fit"] = f;
  j["pairs_skipped"] = pairs_skipped;
  return j.dump(2) + "\n";
}

}  // namespace simexplain
