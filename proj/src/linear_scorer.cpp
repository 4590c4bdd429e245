#include "simexplain/linear_scorer.hpp"

#include <cmath>
#include <random>

#include "simexplain/error.hpp"
#include "simexplain/kernels.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

LinearToyScorer::LinearToyScorer(ImageShape shape, const LinearToyOptions& opts)
    : shape_(shape), dim_(opts.dim) {
  if (opts.dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1)
    throw InvalidArgument("scorer input dims must be >= 1");
  const std::size_t p = shape.size();
  weight_.resize(static_cast<std::size_t>(dim_) * p);
  auto rng = make_rng(opts.seed, 0x11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int d = 0; d < dim_; ++d) {
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        for (int c = 0; c < shape.channels; ++c) {
          const bool in_plant = opts.plant && opts.plant->contains(y, x);
          const double scale = opts.plant ? (in_plant ? opts.plant_scale : opts.background_scale) : 1.0;
          const double v = normal(rng);
          weight_[static_cast<std::size_t>(d) * p +
                  (static_cast<std::size_t>(y) * shape.width + x) * shape.channels + c] = scale * v;
        }
  }
}

LinearToyScorer::LinearToyScorer(ImageShape shape, int dim, std::vector<double> weight)
    : shape_(shape), dim_(dim), weight_(std::move(weight)) {
  if (dim < 1) throw InvalidArgument("embedding dim must be >= 1");
  if (weight_.size() != static_cast<std::size_t>(dim) * shape.size())
    throw InvalidArgument("weight matrix must be D x (H*W*C)");
  for (double w : weight_)
    if (!std::isfinite(w)) throw InvalidData("scorer weights must be finite");
}

ScorerCaps LinearToyScorer::caps() const {
  return ScorerCaps{true, true, true, 1 << 20};
}

std::vector<double> LinearToyScorer::score_batch(const ImageTensor& ref,
                                                 std::span<const ImageTensor> queries) const {
  check_shape(ref);
  for (const auto& q : queries) check_shape(q);
  std::vector<double> e_ref(dim_);
  kernels::linear_embed(weight_, dim_, ref.data(), e_ref);
  const auto rows = kernels::linear_embed_batch(weight_, dim_, queries, exec_);
  return kernels::cosine_rows(e_ref, rows, dim_, exec_);
}

Embedding LinearToyScorer::embed(const ImageTensor& image) const {
  check_shape(image);
  Embedding e{std::vector<double>(dim_)};
  kernels::linear_embed(weight_, dim_, image.data(), e.data);
  return e;
}

std::vector<double> LinearToyScorer::grad_query(const ImageTensor& ref,
                                                const ImageTensor& query) const {
  check_shape(ref);
  check_shape(query);
  std::vector<double> a(dim_), b(dim_);
  kernels::linear_embed(weight_, dim_, ref.data(), a);
  kernels::linear_embed(weight_, dim_, query.data(), b);
  const double eps2 = kNormEps * kNormEps;
  double dot = 0.0, na2 = eps2, nb2 = eps2;
  for (int d = 0; d < dim_; ++d) {
    dot += a[d] * b[d];
    na2 += a[d] * a[d];
    nb2 += b[d] * b[d];
  }
  // s = a.b / (|a| |b|);  ds/db = a / (|a||b|) - (a.b) b / (|a| |b|^3)
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  std::vector<double> ds_db(dim_);
  for (int d = 0; d < dim_; ++d) ds_db[d] = a[d] / (na * nb) - dot * b[d] / (na * nb * nb2);
  const std::size_t p = shape_.size();
  std::vector<double> g(p, 0.0);
  for (int d = 0; d < dim_; ++d) {
    const double* w = weight_.data() + static_cast<std::size_t>(d) * p;
    for (std::size_t i = 0; i < p; ++i) g[i] += ds_db[d] * w[i];
  }
  return g;
}

}  // namespace simexplain
