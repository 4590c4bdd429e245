#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "simexplain/attrmodel.hpp"
#include "simexplain/error.hpp"
#include "simexplain/eval.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace {

// Gradient of sum_c G_c * N_c w.r.t. the un-normalized map n, where
// N = (n - min) / (max - min). Zero for a constant map.
void normalize_backward(const Grid& n, const Grid& normalized, const std::vector<double>& g,
                        std::vector<double>& dn) {
  const auto [lo, hi] = std::minmax_element(n.data.begin(), n.data.end());
  const double range = *hi - *lo;
  dn.assign(n.size(), 0.0);
  if (range == 0.0) return;
  double to_min = 0.0, to_max = 0.0;
  for (std::size_t c = 0; c < n.size(); ++c) {
    dn[c] = g[c] / range;
    to_min += g[c] * (normalized.data[c] - 1.0) / range;
    to_max -= g[c] * normalized.data[c] / range;
  }
  dn[static_cast<std::size_t>(lo - n.data.begin())] += to_min;
  dn[static_cast<std::size_t>(hi - n.data.begin())] += to_max;
}

double sample_loss_and_grad(const AttributeModel& model, const AttrSample& s, double lambda,
                            std::vector<double>& gh, std::vector<double>& gb) {
  const int d = model.dim(), na = model.n_attributes;
  const auto& f = *s.features;
  const auto pred = model.forward_features(f);
  gh.assign(static_cast<std::size_t>(na) * d, 0.0);
  gb.assign(na, 0.0);

  double loss = huber_loss(pred.confidences, s.labels);
  std::vector<double> dconf(na);
  for (int a = 0; a < na; ++a) {
    const double diff = s.labels[a] - pred.confidences[a];
    dconf[a] = std::abs(diff) <= 1.0 ? -diff : -1.0;
  }
  double dot = 0.0;
  for (int a = 0; a < na; ++a) dot += dconf[a] * pred.confidences[a];
  std::vector<double> mean_f(d, 0.0);
  for (int c = 0; c < FeatureGrid::kCells; ++c)
    for (int k = 0; k < d; ++k) mean_f[k] += f.cell(c)[k];
  for (auto& v : mean_f) v /= FeatureGrid::kCells;
  for (int a = 0; a < na; ++a) {
    const double dz = pred.confidences[a] * (dconf[a] - dot);
    for (int k = 0; k < d; ++k) gh[static_cast<std::size_t>(a) * d + k] += dz * mean_f[k];
    gb[a] += dz;
  }

  if (lambda > 0.0 && !s.saliency.empty() && !s.gt.empty()) {
    std::vector<Grid> gt_norm;
    for (int a : s.gt) gt_norm.push_back(normalize_map(pred.maps[a]).grid);
    loss += lambda * heatmap_loss(s.saliency, gt_norm);
    std::vector<std::vector<double>> dnorm(s.gt.size());
    const double per_map = lambda / static_cast<double>(s.saliency.size());
    for (const auto& m : s.saliency) {
      std::size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < gt_norm.size(); ++j) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < m.size(); ++c)
          d2 += (m.data[c] - gt_norm[j].data[c]) * (m.data[c] - gt_norm[j].data[c]);
        if (std::sqrt(d2) < best_dist) {
          best_dist = std::sqrt(d2);
          best = j;
        }
      }
      if (best_dist == 0.0) continue;
      auto& g = dnorm[best];
      if (g.empty()) g.assign(m.size(), 0.0);
      for (std::size_t c = 0; c < m.size(); ++c)
        g[c] += per_map * (gt_norm[best].data[c] - m.data[c]) / best_dist;
    }
    std::vector<double> dn;
    for (std::size_t j = 0; j < s.gt.size(); ++j) {
      if (dnorm[j].empty()) continue;
      const int a = s.gt[j];
      normalize_backward(pred.maps[a], gt_norm[j], dnorm[j], dn);
      for (int c = 0; c < FeatureGrid::kCells; ++c) {
        const double* fc = f.cell(c);
        for (int k = 0; k < d; ++k) gh[static_cast<std::size_t>(a) * d + k] += dn[c] * fc[k];
        gb[a] += dn[c];
      }
    }
  }
  return loss;
}

struct Adam {
  std::vector<double> m, v;
  int t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

std::vector<FeatureGrid> extract_all(const FeatureExtractor& ex, const Dataset& ds,
                                     std::span<const std::size_t> idx) {
  std::vector<FeatureGrid> out(idx.size());
  for_each_chunk(idx.size(), 4, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = ex.extract(ds.images[idx[i]]);
  });
  return out;
}

void round_to_float(std::vector<double>& v) {
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
}

double map_on_features(const AttributeModel& m, const Dataset& ds, std::span<const std::size_t> idx,
                       std::span<const FeatureGrid> feats) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto p = m.forward_features(feats[i]);
    scores.insert(scores.end(), p.confidences.begin(), p.confidences.end());
    const auto row = ds.label_row(idx[i]);
    labels.insert(labels.end(), row.begin(), row.end());
  }
  return mean_average_precision(scores, labels, m.n_attributes);
}

}  // namespace

double attr_loss_and_grad(const AttributeModel& model, std::span<const AttrSample> batch,
                          double lambda, std::vector<double>* grad_head,
                          std::vector<double>* grad_bias) {
  if (batch.empty()) throw InvalidArgument("attr_loss_and_grad: empty batch");
  const std::size_t n = batch.size();
  std::vector<std::vector<double>> gh(n), gb(n);
  std::vector<double> losses(n);
  for_each_chunk(n, 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      losses[i] = sample_loss_and_grad(model, batch[i], lambda, gh[i], gb[i]);
  });
  double loss = 0.0;
  if (grad_head) grad_head->assign(model.head.size(), 0.0);
  if (grad_bias) grad_bias->assign(model.bias.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    if (grad_head)
      for (std::size_t k = 0; k < gh[i].size(); ++k) (*grad_head)[k] += gh[i][k] / static_cast<double>(n);
    if (grad_bias)
      for (std::size_t k = 0; k < gb[i].size(); ++k) (*grad_bias)[k] += gb[i][k] / static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

double model_map(const AttributeModel& model, const Dataset& ds, std::span<const std::size_t> images,
                 std::size_t* skipped) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (auto i : images) {
    const auto p = model.forward(ds.images[i]);
    scores.insert(scores.end(), p.confidences.begin(), p.confidences.end());
    const auto row = ds.label_row(i);
    labels.insert(labels.end(), row.begin(), row.end());
  }
  return mean_average_precision(scores, labels, model.n_attributes, skipped);
}

AttrTrainResult train_attribute_model(const Dataset& ds, const SaliencyBank& bank,
                                      const AttrTrainConfig& cfg) {
  cfg.validate();
  const auto train_idx = ds.images_in(Split::Train);
  auto val_idx = ds.images_in(Split::Val);
  if (train_idx.empty()) throw InvalidArgument("training split has no images");
  if (val_idx.empty()) {
    spdlog::warn("no validation images; selecting the snapshot on training mAP");
    val_idx = train_idx;
  }

  AttrTrainResult res;
  AttributeModel model;
  model.extractor = FeatureExtractor(ds.images[train_idx[0]].shape(), cfg.filters, cfg.ksize, cfg.seed);
  model.n_attributes = static_cast<int>(ds.num_attributes());
  const int d = model.dim(), na = model.n_attributes;

  auto train_f = extract_all(model.extractor, ds, train_idx);
  auto val_f = extract_all(model.extractor, ds, val_idx);
  model.feat_mean.assign(d, 0.0);
  model.feat_std.assign(d, 0.0);
  const double count = static_cast<double>(train_f.size()) * FeatureGrid::kCells;
  for (const auto& f : train_f)
    for (int c = 0; c < FeatureGrid::kCells; ++c)
      for (int k = 0; k < d; ++k) model.feat_mean[k] += f.cell(c)[k];
  for (auto& v : model.feat_mean) v /= count;
  for (const auto& f : train_f)
    for (int c = 0; c < FeatureGrid::kCells; ++c)
      for (int k = 0; k < d; ++k) {
        const double dv = f.cell(c)[k] - model.feat_mean[k];
        model.feat_std[k] += dv * dv;
      }
  for (auto& v : model.feat_std) {
    v = std::sqrt(v / count);
    if (v < 1e-8) v = 1.0;
  }
  round_to_float(model.feat_mean);
  round_to_float(model.feat_std);
  auto standardize = [&](std::vector<FeatureGrid>& fs) {
    for (auto& f : fs)
      for (int c = 0; c < FeatureGrid::kCells; ++c)
        for (int k = 0; k < d; ++k) {
          auto& v = f.data[static_cast<std::size_t>(c) * d + k];
          v = (v - model.feat_mean[k]) / model.feat_std[k];
        }
  };
  standardize(train_f);
  standardize(val_f);

  const bool use_bank = cfg.lambda > 0.0 && !bank.empty();
  if (cfg.lambda > 0.0 && bank.empty())
    spdlog::warn("empty saliency bank; training without the heatmap term");
  res.heatmap_term_used = use_bank;

  std::vector<AttrSample> samples;
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    const auto row = ds.label_row(train_idx[i]);
    AttrSample s;
    s.features = &train_f[i];
    s.labels = scaled_labels(row);
    if (s.labels.empty()) {
      ++res.skipped_unlabeled;
      continue;
    }
    for (int a = 0; a < na; ++a)
      if (row[a]) s.gt.push_back(a);
    if (use_bank) {
      if (auto it = bank.find(ds.ids[train_idx[i]]); it != bank.end()) {
        for (const auto& m : it->second) {
          if (static_cast<int>(s.saliency.size()) >= cfg.k) break;
          s.saliency.push_back(to_match_resolution(m.to_grid()));
        }
      }
    }
    samples.push_back(std::move(s));
  }
  if (res.skipped_unlabeled > 0)
    spdlog::warn("{} training images have no attributes and were skipped", res.skipped_unlabeled);
  if (samples.empty()) throw InvalidData("no labelled training images");

  auto rng = make_rng(cfg.seed, 0x4a7);
  std::normal_distribution<double> init(0.0, 0.01);
  model.head.resize(static_cast<std::size_t>(na) * d);
  for (auto& v : model.head) v = init(rng);
  model.bias.assign(na, 0.0);

  std::vector<double> params(model.head.size() + model.bias.size());
  Adam opt(params.size());
  std::vector<double> gh, gb, grad(params.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<AttrSample> batch;

  auto snapshot = [&] {
    AttributeModel m = model;
    round_to_float(m.head);
    round_to_float(m.bias);
    return m;
  };
  res.best_val_map = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto erng = make_rng(cfg.seed, 0x10000u + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), erng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      batch.clear();
      for (std::size_t i = b; i < e; ++i) batch.push_back(samples[order[i]]);
      const double loss = attr_loss_and_grad(model, batch, use_bank ? cfg.lambda : 0.0, &gh, &gb);
      if (!std::isfinite(loss)) throw OptimizationError("attribute training diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(e - b);
      std::copy(model.head.begin(), model.head.end(), params.begin());
      std::copy(model.bias.begin(), model.bias.end(), params.begin() + static_cast<std::ptrdiff_t>(model.head.size()));
      std::copy(gh.begin(), gh.end(), grad.begin());
      std::copy(gb.begin(), gb.end(), grad.begin() + static_cast<std::ptrdiff_t>(gh.size()));
      opt.step(params, grad, cfg.lr);
      std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(model.head.size()), model.head.begin());
      std::copy(params.begin() + static_cast<std::ptrdiff_t>(model.head.size()), params.end(), model.bias.begin());
    }
    res.loss_history.push_back(epoch_loss / static_cast<double>(samples.size()));
    const auto snap = snapshot();
    const double val = map_on_features(snap, ds, val_idx, val_f);
    res.val_map_history.push_back(val);
    if (val > res.best_val_map) {
      res.best_val_map = val;
      res.best_epoch = epoch;
      res.model = snap;
    }
  }
  return res;
}

}  // namespace simexplain
