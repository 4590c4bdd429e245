#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "simexplain/kernels.hpp"
#include "simexplain/saliency_map.hpp"
#include "simexplain/scorer.hpp"
#include "simexplain/segmentation.hpp"

namespace simexplain {

struct SlidingConfig {
  int windows_query = 625;
  double window_area_frac = 0.12;
  int windows_ref = 36;
};

struct RiseConfig {
  int n_masks = 2000;
  int grid = 8;
  double keep_prob = 0.5;
  int n_ref_masks = 30;
};

enum class SegmentationKind { Grid, SlicLike };

struct LimeConfig {
  int n_samples = 1000;
  SegmentationKind segmentation = SegmentationKind::Grid;
  int n_segments = 49;
  /// Fraction of the data-dependent alpha_max (the smallest alpha that zeroes
  /// every coefficient).
  double lasso_alpha = 0.1;
  int max_sweeps = 10000;
};

enum class Perturbation { Delete, Noise, Blur };

struct MaskConfig {
  int grid = 14;
  int iters = 500;
  double lr = 0.1;
  /// +infinity restricts the search to constant masks.
  double tv_weight = 1.0;
  double l1_weight = 1.0;
  Perturbation perturb = Perturbation::Delete;
  /// +1 minimizes the retained similarity (deletion game); -1 maximizes it.
  double score_sign = 1.0;
  double noise_sigma = 0.2;
  double blur_sigma = 5.0;
  /// Forward differences on the mask when the scorer has no gradient.
  bool finite_difference = false;
  double fd_step = 1e-3;
};

struct SaliencyConfig {
  Method method = Method::RISE;
  bool fixed_reference = true;
  std::uint64_t seed = 0;
  SlidingConfig sliding;
  RiseConfig rise;
  LimeConfig lime;
  MaskConfig mask;

  /// Throws InvalidArgument on counts < 1, probabilities or area fraction
  /// outside (0, 1), or negative weights.
  void validate() const;
};

std::string_view perturbation_name(Perturbation p);
Perturbation parse_perturbation(std::string_view s);
std::string_view segmentation_name(SegmentationKind k);
SegmentationKind parse_segmentation(std::string_view s);

/// N random keep-masks drawn on a grid x grid lattice; upsampled versions are
/// produced on demand (bilinear to (grid + 1) cells, then a random crop).
class MaskSet {
 public:
  MaskSet(int count, int grid, double keep_prob, int height, int width, std::uint64_t seed);

  std::size_t size() const { return low_.size(); }
  std::uint64_t seed() const { return seed_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const Grid& lowres(std::size_t i) const { return low_.at(i); }
  void upsampled(std::size_t i, Grid& out) const;
  Grid upsampled(std::size_t i) const;

 private:
  std::vector<Grid> low_;
  std::vector<std::pair<int, int>> offsets_;
  // Bilinear taps of the (grid+1)*cell upsample, per output row / column.
  struct Tap {
    int lo, hi;
    double t;
  };
  std::vector<Tap> row_taps_, col_taps_;
  int grid_, height_, width_, cell_h_, cell_w_;
  std::uint64_t seed_;
};

/// Mean over the reference variants of score(ref_j, q_i), for each query.
/// With one reference this is exactly score_batch(ref, queries).
std::vector<double> mean_scores(const Scorer& scorer, std::span<const ImageTensor> refs,
                                std::span<const ImageTensor> queries);

/// Window placement for the sliding-window method: a sqrt(count)^2 lattice of
/// square windows of side round(sqrt(area_frac * H * W)).
/// Throws InvalidArgument when count is not a perfect square or the window
/// does not fit the image.
std::vector<kernels::Window> window_lattice(int height, int width, int count, double area_frac);

/// Reference manipulations used in dual mode for `method`.
std::vector<ImageTensor> reference_variants(const ImageTensor& ref, const SaliencyConfig& cfg);

SaliencyMap generate(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                     const SaliencyConfig& cfg);
/// generate() with fixed_reference forced off. LIME throws Unsupported.
SaliencyMap dual_manipulate(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                            const SaliencyConfig& cfg);

SaliencyMap sliding_window(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                           const SaliencyConfig& cfg);
SaliencyMap rise(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                 const SaliencyConfig& cfg);
SaliencyMap lime(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                 const SaliencyConfig& cfg);
SaliencyMap mask_learn(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                       const SaliencyConfig& cfg);

// Variants taking an explicit set of reference manipulations. The map's
// fixed_reference flag is taken from cfg.
SaliencyMap sliding_window(const Scorer& scorer, std::span<const ImageTensor> refs,
                           const ImageTensor& query, const SaliencyConfig& cfg);
SaliencyMap rise(const Scorer& scorer, std::span<const ImageTensor> refs, const ImageTensor& query,
                 const SaliencyConfig& cfg);

/// Objective minimized by the Mask method, exposed for gradient checks.
///   L = sign * s(ref', q') + l1 * mean|1 - M| + tv * mean |dM|^3
/// where q' = q * up(M) + P * (1 - up(M)); with a reference mask the same is
/// applied to the reference and its regularizers are added.
class MaskObjective {
 public:
  MaskObjective(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                const MaskConfig& cfg, std::uint64_t seed);

  ImageTensor perturb_query(const Grid& mq) const;
  ImageTensor perturb_ref(const Grid& mr) const;

  /// mr may be null (fixed reference).
  double value(const Grid& mq, const Grid* mr) const;
  /// Analytic gradient when the scorer supports it, forward differences
  /// otherwise. gr is filled only when mr is non-null.
  double value_and_grad(const Grid& mq, const Grid* mr, Grid& gq, Grid* gr) const;
  double regularizer(const Grid& m) const;

 private:
  void regularizer_grad(const Grid& m, Grid& g) const;
  double score_term(const ImageTensor& r, const ImageTensor& q) const;

  const Scorer& scorer_;
  ImageTensor ref_, query_, fill_q_, fill_r_;
  MaskConfig cfg_;
};

/// Gaussian blur with a separable kernel of radius ceil(3 sigma), edges clamped.
ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

}  // namespace simexplain
