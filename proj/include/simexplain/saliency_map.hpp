#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simexplain/tensor.hpp"

namespace simexplain {

enum class Method : std::uint8_t { SlidingWindow = 0, RISE = 1, LIME = 2, Mask = 3 };

std::string_view method_name(Method m);
/// Accepts "sliding", "sliding_window", "rise", "lime", "mask" (case-insensitive).
Method parse_method(std::string_view s);

/// Resolution at which saliency maps and attribute activation maps are compared.
inline constexpr int kMatchResolution = 7;

struct SaliencyMap {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
  Method method = Method::RISE;
  bool fixed_reference = true;
  bool normalized = false;

  Grid to_grid() const;
  /// Normalized map whose values are all zero: carries no localization.
  bool degenerate() const;
  bool operator==(const SaliencyMap&) const = default;
};

enum class ResizeMode { Bilinear, AveragePool };

/// Bilinear uses align-corners sampling so corner values are reproduced
/// exactly; average-pool splits the input into near-equal rectangles.
Grid resize_map(const Grid& in, int out_rows, int out_cols, ResizeMode mode);

/// Transpose of the bilinear resize: maps a gradient w.r.t. the resized grid
/// back onto the in_rows x in_cols source grid.
Grid resize_bilinear_adjoint(const Grid& grad_out, int in_rows, int in_cols);

struct Normalized {
  Grid grid;
  bool degenerate = false;
};

/// Min-max rescale to [0, 1]. Constant input maps to all zeros with the
/// degenerate flag set. Throws InvalidData on NaN/Inf.
Normalized normalize_map(const Grid& in);

/// Wraps a raw score grid as a normalized SaliencyMap.
SaliencyMap make_saliency_map(const Grid& raw, Method method, bool fixed_reference);

/// Average-pools to kMatchResolution^2 and renormalizes.
Grid to_match_resolution(const Grid& map);

/// First maximum in raster order.
std::size_t argmax_raster(const std::vector<double>& v);

}  // namespace simexplain
