#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simexplain/saliency_map.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

struct Curve {
  /// Raw similarity at each step, step 0 first.
  std::vector<double> scores;
  /// Per-curve min-max rescaled scores; all 0.5 for a flat curve.
  std::vector<double> normalized;
  double auc = 0.5;
  bool flat = false;
  /// The map was constant, so pixels were taken in raster order.
  bool degenerate_map = false;
};

/// Pixel indices of an H x W image ordered by bilinearly upsampled saliency,
/// highest first, raster order among ties.
std::vector<std::size_t> pixel_order(const SaliencyMap& map, int height, int width);

/// Pixel count revealed at step k of n: round(k * P / n).
std::size_t pixels_at_step(std::size_t k, std::size_t n_steps, std::size_t total);

/// Trapezoid area under y sampled at evenly spaced x in [0, 1].
double trapezoid_auc(std::span<const double> y);

/// Copies the top pixels of the query onto a blank image, 1/step_frac steps.
Curve insertion_curve(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                      const SaliencyMap& map, double step_frac = 0.01);
/// Zero-fills the top pixels of the query.
Curve deletion_curve(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                     const SaliencyMap& map, double step_frac = 0.01);

/// Non-interpolated AP: mean over positives of precision at their rank, with
/// items sorted by score descending and ties kept in input order. Throws
/// InvalidArgument when there is no positive.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Macro AP over the columns of N x A row-major score and label matrices.
/// Columns without positives are skipped and counted in `skipped`.
double mean_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              int n_attributes, std::size_t* skipped = nullptr);

/// Fraction of items whose predicted attribute is among its positives.
double top1_accuracy(std::span<const int> predicted,
                     std::span<const std::vector<std::uint8_t>> label_rows);

struct RemovalItem {
  std::size_t query = 0;
  std::size_t reference = 0;
  int attribute = 0;
};

struct RemovalResult {
  double mean_delta = 0.0;
  std::vector<double> deltas;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

/// For each item: the nearest corpus image to the query (embedding cosine,
/// ties to the lower index) for which eligible(image, attribute) holds, the
/// query and reference excluded; delta = s(ref, query) - s(ref, retrieved).
/// Items with no eligible image are skipped.
RemovalResult attribute_removal_delta(
    const Scorer& scorer, std::span<const ImageTensor> images, std::span<const RemovalItem> items,
    std::span<const std::size_t> corpus,
    const std::function<bool(std::size_t image, int attribute)>& eligible);

struct CurveSummary {
  double insertion = 0.0;  // mean AUC x 100
  double deletion = 0.0;
  double insertion_se = 0.0;  // standard error of the mean, x 100
  double deletion_se = 0.0;
  std::size_t pairs = 0;
  std::size_t flat_curves = 0;
  std::size_t degenerate_maps = 0;
};

/// Mean and standard error (x 100) over the curves of one method.
CurveSummary summarize_curves(std::span<const Curve> insertion, std::span<const Curve> deletion);

struct MetricsReport {
  /// Keyed by "<Method>/<fixed|dual>".
  std::map<std::string, CurveSummary> saliency;
  /// Keyed by "<model>/<split>", e.g. "sane/val".
  std::map<std::string, double> map;
  std::size_t map_skipped_attributes = 0;
  /// Keyed by ranking name ("confidence", "sane", ...).
  std::map<std::string, double> top1;
  std::map<std::string, double> removal;  // mean delta x 100
  std::map<std::string, std::size_t> removal_skipped;
  std::map<std::string, double> discovery;
  /// Fitted ranking weights and prior bookkeeping.
  std::map<std::string, double> fit;
  std::size_t pairs_skipped = 0;

  std::string to_json() const;
};

}  // namespace simexplain
