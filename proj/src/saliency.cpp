#include "simexplain/saliency.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "perturb.hpp"
#include "simexplain/error.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace {

std::string lower(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  return l;
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(std::string("saliency config: ") + what);
}

// Seed used for the dual-mode reference masks, kept apart from the query masks.
constexpr std::uint64_t kRefSeedSalt = 0x52454620u;

}  // namespace

void SaliencyConfig::validate() const {
  require(sliding.windows_query >= 1 && sliding.windows_ref >= 1, "window counts must be >= 1");
  require(sliding.window_area_frac > 0 && sliding.window_area_frac < 1,
          "window_area_frac must be in (0,1)");
  require(rise.n_masks >= 1 && rise.n_ref_masks >= 1 && rise.grid >= 1, "RISE counts must be >= 1");
  require(rise.keep_prob > 0 && rise.keep_prob < 1, "keep_prob must be in (0,1)");
  require(lime.n_samples >= 1 && lime.n_segments >= 1 && lime.max_sweeps >= 1,
          "LIME counts must be >= 1");
  require(lime.lasso_alpha >= 0 && std::isfinite(lime.lasso_alpha), "lasso_alpha must be >= 0");
  require(mask.grid >= 1 && mask.iters >= 1, "mask counts must be >= 1");
  require(mask.lr > 0 && std::isfinite(mask.lr), "mask lr must be > 0");
  require(mask.tv_weight >= 0 && mask.l1_weight >= 0 && std::isfinite(mask.l1_weight),
          "mask weights must be >= 0");
  require(mask.score_sign == 1.0 || mask.score_sign == -1.0, "score_sign must be +1 or -1");
  require(mask.noise_sigma >= 0 && mask.blur_sigma > 0, "perturbation sigmas out of range");
  require(mask.fd_step > 0 && mask.fd_step < 0.5, "fd_step must be in (0, 0.5)");
}

std::string_view perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::Delete: return "delete";
    case Perturbation::Noise: return "noise";
    case Perturbation::Blur: return "blur";
  }
  return "?";
}

Perturbation parse_perturbation(std::string_view s) {
  const auto l = lower(s);
  if (l == "delete") return Perturbation::Delete;
  if (l == "noise") return Perturbation::Noise;
  if (l == "blur") return Perturbation::Blur;
  throw InvalidArgument("unknown perturbation '" + std::string(s) + "'");
}

std::string_view segmentation_name(SegmentationKind k) {
  return k == SegmentationKind::Grid ? "grid" : "slic_like";
}

SegmentationKind parse_segmentation(std::string_view s) {
  const auto l = lower(s);
  if (l == "grid") return SegmentationKind::Grid;
  if (l == "slic_like" || l == "slic") return SegmentationKind::SlicLike;
  throw InvalidArgument("unknown segmentation '" + std::string(s) + "'");
}

MaskSet::MaskSet(int count, int grid, double keep_prob, int height, int width, std::uint64_t seed)
    : grid_(grid), height_(height), width_(width), seed_(seed) {
  if (count < 1 || grid < 1 || height < 1 || width < 1)
    throw InvalidArgument("MaskSet: counts and dims must be >= 1");
  if (!(keep_prob > 0 && keep_prob <= 1)) throw InvalidArgument("MaskSet: keep_prob out of range");
  cell_h_ = (height + grid - 1) / grid;
  cell_w_ = (width + grid - 1) / grid;
  low_.reserve(count);
  offsets_.reserve(count);
  for (int i = 0; i < count; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    Grid g(grid, grid);
    for (auto& v : g.data) v = uniform01(rng) < keep_prob ? 1.0 : 0.0;
    const int oy = static_cast<int>(rng() % static_cast<std::uint64_t>(cell_h_));
    const int ox = static_cast<int>(rng() % static_cast<std::uint64_t>(cell_w_));
    low_.push_back(std::move(g));
    offsets_.emplace_back(oy, ox);
  }
  auto taps = [&](int out) {
    std::vector<Tap> t(out);
    for (int i = 0; i < out; ++i) {
      const double s = out == 1 ? 0.5 * (grid - 1) : static_cast<double>(i) * (grid - 1) / (out - 1);
      const int lo = std::min(static_cast<int>(s), grid - 1);
      t[i] = Tap{lo, std::min(lo + 1, grid - 1), s - lo};
    }
    return t;
  };
  row_taps_ = taps((grid + 1) * cell_h_);
  col_taps_ = taps((grid + 1) * cell_w_);
}

void MaskSet::upsampled(std::size_t i, Grid& out) const {
  // Same arithmetic as resize_map(Bilinear) restricted to the crop window.
  const Grid& in = low_.at(i);
  const auto [oy, ox] = offsets_[i];
  if (out.rows != height_ || out.cols != width_) out = Grid(height_, width_);
  for (int y = 0; y < height_; ++y) {
    const Tap& ry = row_taps_[y + oy];
    for (int x = 0; x < width_; ++x) {
      const Tap& rx = col_taps_[x + ox];
      const double top = in(ry.lo, rx.lo) + rx.t * (in(ry.lo, rx.hi) - in(ry.lo, rx.lo));
      const double bot = in(ry.hi, rx.lo) + rx.t * (in(ry.hi, rx.hi) - in(ry.hi, rx.lo));
      out(y, x) = top + ry.t * (bot - top);
    }
  }
}

Grid MaskSet::upsampled(std::size_t i) const {
  Grid g(height_, width_);
  upsampled(i, g);
  return g;
}

std::vector<double> mean_scores(const Scorer& scorer, std::span<const ImageTensor> refs,
                                std::span<const ImageTensor> queries) {
  if (refs.empty()) throw InvalidArgument("mean_scores: no reference variants");
  std::vector<double> acc(queries.size(), 0.0);
  for (const auto& r : refs) {
    const auto s = scorer.score_batch(r, queries);
    if (s.size() != queries.size()) throw ComputeError("scorer returned wrong number of scores");
    for (std::size_t i = 0; i < s.size(); ++i) acc[i] += s[i];
  }
  if (refs.size() > 1)
    for (auto& v : acc) v /= static_cast<double>(refs.size());
  return acc;
}

std::vector<kernels::Window> window_lattice(int height, int width, int count, double area_frac) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(count))));
  if (n < 1 || n * n != count)
    throw InvalidArgument("window count must be a perfect square, got " + std::to_string(count));
  const int side = static_cast<int>(std::lround(std::sqrt(area_frac * height * width)));
  if (side < 1 || side > height || side > width)
    throw InvalidArgument("occlusion window of side " + std::to_string(side) +
                          " does not fit a " + std::to_string(height) + "x" +
                          std::to_string(width) + " image");
  auto origin = [&](int i, int extent) {
    if (n == 1) return (extent - side) / 2;
    return static_cast<int>(std::lround(static_cast<double>(i) * (extent - side) / (n - 1)));
  };
  std::vector<kernels::Window> out;
  out.reserve(count);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.push_back({origin(i, height), origin(j, width), side});
  return out;
}

std::vector<ImageTensor> reference_variants(const ImageTensor& ref, const SaliencyConfig& cfg) {
  std::vector<ImageTensor> out;
  switch (cfg.method) {
    case Method::SlidingWindow: {
      for (const auto& w : window_lattice(ref.height(), ref.width(), cfg.sliding.windows_ref,
                                          cfg.sliding.window_area_frac))
        out.push_back(detail::occlude(ref, w.y, w.x, w.side));
      break;
    }
    case Method::RISE: {
      const MaskSet set(cfg.rise.n_ref_masks, cfg.rise.grid, cfg.rise.keep_prob, ref.height(),
                        ref.width(), cfg.seed ^ kRefSeedSalt);
      Grid m;
      for (std::size_t i = 0; i < set.size(); ++i) {
        set.upsampled(i, m);
        out.push_back(blend(ref, m));
      }
      break;
    }
    case Method::LIME: throw Unsupported("LIME has no dual-manipulation mode");
    case Method::Mask: throw Unsupported("Mask learns its reference mask jointly; no fixed variants");
  }
  return out;
}

SaliencyMap generate(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                     const SaliencyConfig& cfg) {
  cfg.validate();
  if (!scorer.caps().can_score) throw Unsupported("scorer cannot score");
  switch (cfg.method) {
    case Method::SlidingWindow: return sliding_window(scorer, ref, query, cfg);
    case Method::RISE: return rise(scorer, ref, query, cfg);
    case Method::LIME: return lime(scorer, ref, query, cfg);
    case Method::Mask: return mask_learn(scorer, ref, query, cfg);
  }
  throw InvalidArgument("unknown method");
}

SaliencyMap dual_manipulate(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                            const SaliencyConfig& cfg) {
  if (cfg.method == Method::LIME) throw Unsupported("LIME supports the fixed-reference mode only");
  auto c = cfg;
  c.fixed_reference = false;
  return generate(scorer, ref, query, c);
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (!(sigma > 0)) throw InvalidArgument("blur sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;
  const int h = img.height(), w = img.width(), c = img.channels();
  std::vector<double> tmp(img.size()), out(img.size());
  auto src = img.data();
  auto idx = [&](int y, int x, int ch) { return (static_cast<std::size_t>(y) * w + x) * c + ch; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * src[idx(y, std::clamp(x + i, 0, w - 1), ch)];
        tmp[idx(y, x, ch)] = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp[idx(std::clamp(y + i, 0, h - 1), x, ch)];
        out[idx(y, x, ch)] = std::clamp(acc, 0.0, 1.0);
      }
  return ImageTensor(img.shape(), std::move(out));
}

namespace detail {

std::vector<double> score_perturbations(const Scorer& scorer, std::span<const ImageTensor> refs,
                                        std::size_t n,
                                        const std::function<ImageTensor(std::size_t)>& make,
                                        Exec exec) {
  std::vector<double> scores(n);
  for_each_chunk(n, kChunk, exec, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<ImageTensor> batch;
    batch.reserve(e - b);
    for (std::size_t i = b; i < e; ++i) batch.push_back(make(i));
    const auto s = mean_scores(scorer, refs, batch);
    std::copy(s.begin(), s.end(), scores.begin() + static_cast<std::ptrdiff_t>(b));
  });
  return scores;
}

bool all_equal(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

ImageTensor occlude(const ImageTensor& img, int y, int x, int side) {
  std::vector<double> d(img.data().begin(), img.data().end());
  const int w = img.width(), c = img.channels();
  for (int yy = y; yy < y + side; ++yy)
    for (int xx = x; xx < x + side; ++xx)
      for (int ch = 0; ch < c; ++ch) d[(static_cast<std::size_t>(yy) * w + xx) * c + ch] = 0.0;
  return ImageTensor(img.shape(), std::move(d));
}

}  // namespace detail
}  // namespace simexplain
