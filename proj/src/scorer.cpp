#include "simexplain/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simexplain/error.hpp"

namespace simexplain {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double eps2 = kNormEps * kNormEps;
  return std::clamp(dot / std::sqrt((na + eps2) * (nb + eps2)), -1.0, 1.0);
}

double Scorer::score(const ImageTensor& ref, const ImageTensor& query) const {
  return score_batch(ref, std::span(&query, 1)).at(0);
}

Embedding Scorer::embed(const ImageTensor&) const {
  throw Unsupported("scorer does not expose embeddings");
}

std::vector<double> Scorer::grad_query(const ImageTensor&, const ImageTensor&) const {
  throw Unsupported("scorer does not expose gradients");
}

void Scorer::check_shape(const ImageTensor& img) const {
  const auto s = input_shape();
  if (!(img.shape() == s))
    throw InvalidArgument("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                          "x" + std::to_string(img.channels()) + " does not match scorer input " +
                          std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
                          std::to_string(s.channels));
}

}  // namespace simexplain
