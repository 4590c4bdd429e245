#include "simexplain/triplet_scorer.hpp"

#include <cmath>
#include <random>

#include "simexplain/error.hpp"
#include "simexplain/kernels.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace {

// d cos(a, b) / d a
void cosine_grad(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const double eps2 = kNormEps * kNormEps;
  double dot = 0, na2 = eps2, nb2 = eps2;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na2 += a[i] * a[i];
    nb2 += b[i] * b[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = b[i] / (na * nb) - dot * a[i] / (na2 * na * nb);
}

void matvec(std::span<const double> w, int rows, std::span<const double> x, std::span<double> out) {
  kernels::linear_embed(w, rows, x, out);
}

}  // namespace

TripletToyScorer::TripletToyScorer(ImageShape shape, std::vector<double> proj,
                                   std::vector<double> bias, std::vector<double> feat_mean,
                                   std::vector<double> feat_std, int dim, std::vector<double> weight)
    : shape_(shape),
      proj_(std::move(proj)),
      bias_(std::move(bias)),
      feat_mean_(std::move(feat_mean)),
      feat_std_(std::move(feat_std)),
      dim_(dim),
      weight_(std::move(weight)) {
  if (dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  if (bias_.empty()) throw InvalidArgument("feature layer must have at least one unit");
  if (proj_.size() != bias_.size() * shape.channels)
    throw InvalidArgument("feature projection must be F x C");
  if (feat_mean_.size() != bias_.size() || feat_std_.size() != bias_.size())
    throw InvalidArgument("feature statistics must have F entries");
  for (double v : feat_std_)
    if (!(v > 0)) throw InvalidData("feature std must be > 0");
  if (weight_.size() != static_cast<std::size_t>(dim) * bias_.size())
    throw InvalidArgument("embedding weight must be D x F");
  for (double v : weight_)
    if (!std::isfinite(v)) throw InvalidData("scorer weights must be finite");
}

void TripletToyScorer::standardize(std::span<double> f) const {
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (f[i] - feat_mean_[i]) / feat_std_[i];
}

std::vector<double> TripletToyScorer::pooled(const ImageTensor& image) const {
  std::vector<double> p(bias_.size());
  kernels::relu_pool(proj_, bias_, shape_.channels, image.data(), p);
  standardize(p);
  return p;
}

Embedding TripletToyScorer::embed(const ImageTensor& image) const {
  check_shape(image);
  Embedding e{std::vector<double>(dim_)};
  matvec(weight_, dim_, pooled(image), e.data);
  return e;
}

std::vector<double> TripletToyScorer::score_batch(const ImageTensor& ref,
                                                  std::span<const ImageTensor> queries) const {
  check_shape(ref);
  for (const auto& q : queries) check_shape(q);
  const auto e_ref = embed(ref);
  const std::size_t nf = bias_.size();
  auto feats = kernels::relu_pool_batch(proj_, bias_, shape_.channels, queries, exec_);
  std::vector<double> rows(queries.size() * dim_);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    standardize(std::span(feats).subspan(i * nf, nf));
    matvec(weight_, dim_, std::span(feats).subspan(i * nf, nf), std::span(rows).subspan(i * dim_, dim_));
  }
  return kernels::cosine_rows(e_ref.data, rows, dim_, exec_);
}

std::vector<double> TripletToyScorer::grad_query(const ImageTensor& ref, const ImageTensor& query) const {
  check_shape(ref);
  check_shape(query);
  const auto a = embed(ref);
  const auto b = embed(query);
  std::vector<double> ds_db(dim_);
  cosine_grad(b.data, a.data, ds_db);
  const std::size_t nf = bias_.size();
  const int ch = shape_.channels;
  // back through W, then through the pooled ReLU units
  std::vector<double> g_feat(nf, 0.0);
  for (int d = 0; d < dim_; ++d)
    for (std::size_t f = 0; f < nf; ++f) g_feat[f] += ds_db[d] * weight_[d * nf + f];
  for (std::size_t f = 0; f < nf; ++f) g_feat[f] /= feat_std_[f];
  const std::size_t pixels = static_cast<std::size_t>(shape_.height) * shape_.width;
  const double inv = 1.0 / static_cast<double>(pixels);
  std::vector<double> grad(query.data().size(), 0.0);
  const auto x = query.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* px = x.data() + p * ch;
    double* gp = grad.data() + p * ch;
    for (std::size_t f = 0; f < nf; ++f) {
      const double* w = proj_.data() + f * ch;
      double pre = bias_[f];
      for (int c = 0; c < ch; ++c) pre += w[c] * px[c];
      if (pre <= 0.0) continue;
      for (int c = 0; c < ch; ++c) gp[c] += g_feat[f] * w[c] * inv;
    }
  }
  return grad;
}

TripletToyScorer TripletToyScorer::train(const Dataset& ds, const TripletConfig& cfg) {
  if (ds.images.empty()) throw InvalidArgument("triplet training needs images");
  if (cfg.relevant_attributes.empty()) throw InvalidArgument("triplet training needs relevant attributes");
  if (cfg.dim < 1 || cfg.features < 1) throw InvalidArgument("triplet dim and features must be >= 1");
  if (cfg.epochs < 0 || cfg.triplets_per_epoch < 1) throw InvalidArgument("triplet schedule must be positive");
  if (!(cfg.lr > 0) || !(cfg.margin >= 0) || !(cfg.weight_decay >= 0))
    throw InvalidArgument("triplet lr must be > 0, margin and weight_decay >= 0");
  const ImageShape shape = ds.images.front().shape();
  const int dim = cfg.dim;
  const std::size_t nf = cfg.features;
  const std::size_t a_count = ds.num_attributes();
  for (int a : cfg.relevant_attributes)
    if (a < 0 || static_cast<std::size_t>(a) >= a_count)
      throw InvalidArgument("relevant attribute out of range");

  auto relevant_mask = [&](std::size_t img) {
    unsigned mask = 0;
    for (std::size_t k = 0; k < cfg.relevant_attributes.size(); ++k)
      if (ds.labels[img * a_count + cfg.relevant_attributes[k]]) mask |= 1u << k;
    return mask;
  };
  auto train_imgs = ds.images_in(Split::Train);
  if (train_imgs.empty())
    for (std::size_t i = 0; i < ds.num_images(); ++i) train_imgs.push_back(i);
  std::vector<std::size_t> anchors;
  for (auto i : train_imgs)
    if (relevant_mask(i)) anchors.push_back(i);
  if (anchors.size() < 2) throw InvalidArgument("triplet training: too few images with relevant attributes");

  // Feature layer: half-spaces through random points of the colour cube.
  auto frng = make_rng(cfg.seed, 0x7d);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> cube(0.0, 1.0);
  std::vector<double> proj(nf * shape.channels), bias(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    double off = 0.0;
    for (int c = 0; c < shape.channels; ++c) {
      const double w = 4.0 * unit(frng);
      proj[f * shape.channels + c] = w;
      off += w * cube(frng);
    }
    bias[f] = -off;
  }

  std::vector<std::vector<double>> feats(ds.num_images());
  std::vector<double> mean(nf, 0.0), sd(nf, 0.0);
  for (auto i : train_imgs) {
    feats[i].resize(nf);
    kernels::relu_pool(proj, bias, shape.channels, ds.images[i].data(), feats[i]);
    for (std::size_t f = 0; f < nf; ++f) mean[f] += feats[i][f];
  }
  for (auto& m : mean) m /= static_cast<double>(train_imgs.size());
  for (auto i : train_imgs)
    for (std::size_t f = 0; f < nf; ++f) sd[f] += (feats[i][f] - mean[f]) * (feats[i][f] - mean[f]);
  for (auto& s : sd) {
    s = std::sqrt(s / static_cast<double>(train_imgs.size()));
    if (s < 1e-6) s = 1.0;  // unit never fires on the train split
  }
  for (auto i : train_imgs)
    for (std::size_t f = 0; f < nf; ++f) feats[i][f] = (feats[i][f] - mean[f]) / sd[f];

  auto rng = make_rng(cfg.seed, 0x7e);
  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<double> w(static_cast<std::size_t>(dim) * nf);
  for (auto& v : w) v = normal(rng);

  std::vector<double> ea(dim), ep(dim), en(dim), ga(dim), gp(dim), gn(dim), tmp(dim);
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    int used = 0;
    for (int t = 0; t < cfg.triplets_per_epoch; ++t) {
      const std::size_t a = anchors[std::uniform_int_distribution<std::size_t>(0, anchors.size() - 1)(rng)];
      const unsigned am = relevant_mask(a);
      std::vector<std::size_t> pos, neg;
      for (auto j : train_imgs) {
        if (j == a) continue;
        if (relevant_mask(j) & am) pos.push_back(j);
        else neg.push_back(j);
      }
      if (pos.empty() || neg.empty()) continue;
      const std::size_t pi = pos[std::uniform_int_distribution<std::size_t>(0, pos.size() - 1)(rng)];
      const std::size_t ni = neg[std::uniform_int_distribution<std::size_t>(0, neg.size() - 1)(rng)];
      const auto& xa = feats[a];
      const auto& xp = feats[pi];
      const auto& xn = feats[ni];
      matvec(w, dim, xa, ea);
      matvec(w, dim, xp, ep);
      matvec(w, dim, xn, en);
      const double loss = cfg.margin - cosine(ea, ep) + cosine(ea, en);
      ++used;
      if (loss <= 0.0) continue;
      epoch_loss += loss;
      cosine_grad(ea, ep, tmp);
      for (int d = 0; d < dim; ++d) ga[d] = -tmp[d];
      cosine_grad(ea, en, tmp);
      for (int d = 0; d < dim; ++d) ga[d] += tmp[d];
      cosine_grad(ep, ea, tmp);
      for (int d = 0; d < dim; ++d) gp[d] = -tmp[d];
      cosine_grad(en, ea, tmp);
      for (int d = 0; d < dim; ++d) gn[d] = tmp[d];
      for (int d = 0; d < dim; ++d) {
        double* row = w.data() + static_cast<std::size_t>(d) * nf;
        const double sa = cfg.lr * ga[d], sp = cfg.lr * gp[d], sn = cfg.lr * gn[d];
        for (std::size_t i = 0; i < nf; ++i) row[i] -= sa * xa[i] + sp * xp[i] + sn * xn[i];
      }
    }
    if (cfg.weight_decay > 0)
      for (auto& v : w) v *= 1.0 - cfg.lr * cfg.weight_decay;
    last_epoch_loss = used ? epoch_loss / used : 0.0;
    for (double v : w)
      if (!std::isfinite(v)) throw OptimizationError("triplet training diverged at epoch " + std::to_string(epoch));
  }
  TripletToyScorer s(shape, std::move(proj), std::move(bias), std::move(mean), std::move(sd), dim,
                     std::move(w));
  s.final_loss_ = last_epoch_loss;
  return s;
}

}  // namespace simexplain
