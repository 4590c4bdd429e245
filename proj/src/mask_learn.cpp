#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "simexplain/error.hpp"
#include "simexplain/rng.hpp"
#include "simexplain/saliency.hpp"

namespace simexplain {

namespace {

ImageTensor make_fill(const ImageTensor& img, const MaskConfig& cfg, std::uint64_t seed,
                      std::uint64_t stream) {
  switch (cfg.perturb) {
    case Perturbation::Delete: return ImageTensor(img.shape());
    case Perturbation::Blur: return gaussian_blur(img, cfg.blur_sigma);
    case Perturbation::Noise: {
      auto rng = make_rng(seed, stream);
      std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
      std::vector<double> d(img.data().begin(), img.data().end());
      for (auto& v : d) v = std::clamp(v + noise(rng), 0.0, 1.0);
      return ImageTensor(img.shape(), std::move(d));
    }
  }
  throw InvalidArgument("unknown perturbation");
}

ImageTensor apply_mask(const ImageTensor& img, const ImageTensor& fill, const Grid& m) {
  return blend(img, resize_map(m, img.height(), img.width(), ResizeMode::Bilinear), &fill);
}

// dL/dM from dL/d(image): chain through the blend and the bilinear upsample.
Grid pull_back(std::span<const double> grad_img, const ImageTensor& img, const ImageTensor& fill,
               int grid, double sign) {
  const int h = img.height(), w = img.width(), c = img.channels();
  Grid gu(h, w);
  auto a = img.data();
  auto f = fill.data();
  for (std::size_t p = 0; p < img.shape().pixels(); ++p) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      acc += grad_img[i] * (a[i] - f[i]);
    }
    gu.data[p] = sign * acc;
  }
  return resize_bilinear_adjoint(gu, grid, grid);
}

bool tv_unbounded(const MaskConfig& cfg) { return std::isinf(cfg.tv_weight); }

}  // namespace

MaskObjective::MaskObjective(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                             const MaskConfig& cfg, std::uint64_t seed)
    : scorer_(scorer),
      ref_(ref),
      query_(query),
      fill_q_(make_fill(query, cfg, seed, 1)),
      fill_r_(make_fill(ref, cfg, seed, 2)),
      cfg_(cfg) {}

ImageTensor MaskObjective::perturb_query(const Grid& mq) const { return apply_mask(query_, fill_q_, mq); }
ImageTensor MaskObjective::perturb_ref(const Grid& mr) const { return apply_mask(ref_, fill_r_, mr); }

double MaskObjective::regularizer(const Grid& m) const {
  double l1 = 0.0;
  for (double v : m.data) l1 += std::abs(1.0 - v);
  double reg = cfg_.l1_weight * l1 / static_cast<double>(m.size());
  if (tv_unbounded(cfg_)) return reg;
  const std::size_t pairs = static_cast<std::size_t>(m.rows) * (m.cols - 1) +
                            static_cast<std::size_t>(m.rows - 1) * m.cols;
  if (pairs == 0) return reg;
  double tv = 0.0;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      if (c + 1 < m.cols) tv += std::pow(std::abs(m(r, c + 1) - m(r, c)), 3);
      if (r + 1 < m.rows) tv += std::pow(std::abs(m(r + 1, c) - m(r, c)), 3);
    }
  return reg + cfg_.tv_weight * tv / static_cast<double>(pairs);
}

void MaskObjective::regularizer_grad(const Grid& m, Grid& g) const {
  const double n = static_cast<double>(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double d = 1.0 - m.data[k];
    g.data[k] += d > 0 ? -cfg_.l1_weight / n : (d < 0 ? cfg_.l1_weight / n : 0.0);
  }
  if (tv_unbounded(cfg_)) return;
  const std::size_t pairs = static_cast<std::size_t>(m.rows) * (m.cols - 1) +
                            static_cast<std::size_t>(m.rows - 1) * m.cols;
  if (pairs == 0) return;
  const double k = cfg_.tv_weight / static_cast<double>(pairs);
  auto edge = [&](int r0, int c0, int r1, int c1) {
    const double d = m(r1, c1) - m(r0, c0);
    const double gd = 3.0 * d * std::abs(d) * k;
    g(r1, c1) += gd;
    g(r0, c0) -= gd;
  };
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      if (c + 1 < m.cols) edge(r, c, r, c + 1);
      if (r + 1 < m.rows) edge(r, c, r + 1, c);
    }
}

double MaskObjective::score_term(const ImageTensor& r, const ImageTensor& q) const {
  return cfg_.score_sign * scorer_.score(r, q);
}

double MaskObjective::value(const Grid& mq, const Grid* mr) const {
  const ImageTensor q = perturb_query(mq);
  if (!mr) return score_term(ref_, q) + regularizer(mq);
  return score_term(perturb_ref(*mr), q) + regularizer(mq) + regularizer(*mr);
}

double MaskObjective::value_and_grad(const Grid& mq, const Grid* mr, Grid& gq, Grid* gr) const {
  const int grid = mq.rows;
  const ImageTensor q = perturb_query(mq);
  const ImageTensor r = mr ? perturb_ref(*mr) : ref_;
  const double s = scorer_.score(r, q);
  const double sign = cfg_.score_sign;

  if (scorer_.caps().can_grad) {
    gq = pull_back(scorer_.grad_query(r, q), query_, fill_q_, grid, sign);
    // The reference gradient swaps the argument roles, which assumes a
    // symmetric score.
    if (mr) *gr = pull_back(scorer_.grad_query(q, r), ref_, fill_r_, grid, sign);
  } else if (cfg_.finite_difference) {
    const double h = cfg_.fd_step;
    auto probe = [&](const Grid& m, std::size_t k, double& step) {
      Grid p = m;
      step = p.data[k] + h <= 1.0 ? h : -h;
      p.data[k] += step;
      return p;
    };
    gq = Grid(grid, grid);
    std::vector<ImageTensor> batch;
    std::vector<double> steps(mq.size());
    batch.reserve(mq.size());
    for (std::size_t k = 0; k < mq.size(); ++k) batch.push_back(perturb_query(probe(mq, k, steps[k])));
    const auto sc = scorer_.score_batch(r, batch);
    for (std::size_t k = 0; k < mq.size(); ++k) gq.data[k] = sign * (sc[k] - s) / steps[k];
    if (mr) {
      *gr = Grid(grid, grid);
      for (std::size_t k = 0; k < mr->size(); ++k) {
        double step = 0;
        const double sk = scorer_.score(perturb_ref(probe(*mr, k, step)), q);
        gr->data[k] = sign * (sk - s) / step;
      }
    }
  } else {
    throw Unsupported("Mask needs a scorer gradient or the finite-difference fallback");
  }
  regularizer_grad(mq, gq);
  double loss = sign * s + regularizer(mq);
  if (mr) {
    regularizer_grad(*mr, *gr);
    loss += regularizer(*mr);
  }
  return loss;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  int t = 0;
  static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      x[i] = std::clamp(x[i], 0.0, 1.0);
    }
  }
};

bool finite(const Grid& g) {
  return std::all_of(g.data.begin(), g.data.end(), [](double v) { return std::isfinite(v); });
}

[[noreturn]] void diverged(int iter, const std::deque<double>& trace) {
  std::ostringstream os;
  os << "mask optimization diverged at iteration " << iter << "; recent losses:";
  for (double v : trace) os << ' ' << v;
  throw OptimizationError(os.str());
}

}  // namespace

SaliencyMap mask_learn(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                       const SaliencyConfig& cfg) {
  const auto& mc = cfg.mask;
  if (!scorer.caps().can_grad && !mc.finite_difference)
    throw Unsupported("Mask needs a scorer gradient; enable the finite-difference fallback");
  const bool joint = !cfg.fixed_reference;
  const MaskObjective obj(scorer, ref, query, mc, cfg.seed);
  const int g = mc.grid;
  Grid mq(g, g, 1.0), mr(g, g, 1.0), gq, gr;
  std::deque<double> trace;

  if (tv_unbounded(mc)) {
    // Infinite TV weight admits constant masks only: optimize one level per mask.
    std::vector<double> level{1.0, 1.0};
    Adam opt(2);
    for (int it = 1; it <= mc.iters; ++it) {
      const double loss = obj.value_and_grad(mq, joint ? &mr : nullptr, gq, joint ? &gr : nullptr);
      trace.push_back(loss);
      if (trace.size() > 5) trace.pop_front();
      if (!std::isfinite(loss) || !finite(gq) || (joint && !finite(gr))) diverged(it, trace);
      std::vector<double> grad{0.0, 0.0};
      for (double v : gq.data) grad[0] += v;
      if (joint)
        for (double v : gr.data) grad[1] += v;
      opt.step(level, grad, mc.lr);
      std::fill(mq.data.begin(), mq.data.end(), level[0]);
      std::fill(mr.data.begin(), mr.data.end(), level[1]);
    }
  } else {
    Adam oq(mq.size()), orf(mr.size());
    for (int it = 1; it <= mc.iters; ++it) {
      const double loss = obj.value_and_grad(mq, joint ? &mr : nullptr, gq, joint ? &gr : nullptr);
      trace.push_back(loss);
      if (trace.size() > 5) trace.pop_front();
      if (!std::isfinite(loss) || !finite(gq) || (joint && !finite(gr))) diverged(it, trace);
      oq.step(mq.data, gq.data, mc.lr);
      if (joint) orf.step(mr.data, gr.data, mc.lr);
    }
  }

  Grid raw(g, g);
  for (std::size_t k = 0; k < raw.size(); ++k) raw.data[k] = 1.0 - mq.data[k];
  return make_saliency_map(raw, Method::Mask, cfg.fixed_reference);
}

}  // namespace simexplain
