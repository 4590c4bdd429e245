#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "simexplain/rng.hpp"
#include "simexplain/scorer.hpp"
#include "simexplain/tensor.hpp"

namespace testutil {

using namespace simexplain;

inline ImageTensor random_image(ImageShape s, Rng& rng) {
  std::vector<double> d(s.size());
  for (auto& v : d) v = uniform01(rng);
  return ImageTensor(s, std::move(d));
}

inline Grid random_grid(int r, int c, Rng& rng) {
  Grid g(r, c);
  for (auto& v : g.data) v = uniform01(rng);
  return g;
}

// Returns the same score for everything.
class ConstantScorer : public Scorer {
 public:
  explicit ConstantScorer(ImageShape s, double v = 0.3) : shape_(s), v_(v) {}
  ScorerCaps caps() const override { return {true, false, false, 1 << 20}; }
  ImageShape input_shape() const override { return shape_; }
  std::vector<double> score_batch(const ImageTensor&, std::span<const ImageTensor> q) const override {
    return std::vector<double>(q.size(), v_);
  }

 private:
  ImageShape shape_;
  double v_;
};

// a * inner + b, a > 0.
class AffineScorer : public Scorer {
 public:
  AffineScorer(const Scorer& inner, double a, double b) : inner_(inner), a_(a), b_(b) {}
  ScorerCaps caps() const override {
    auto c = inner_.caps();
    c.can_embed = c.can_grad = false;
    return c;
  }
  ImageShape input_shape() const override { return inner_.input_shape(); }
  std::vector<double> score_batch(const ImageTensor& r, std::span<const ImageTensor> q) const override {
    auto s = inner_.score_batch(r, q);
    for (auto& v : s) v = a_ * v + b_;
    return s;
  }

 private:
  const Scorer& inner_;
  double a_, b_;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace testutil
