#pragma once

#include <vector>

#include "simexplain/tensor.hpp"

namespace simexplain {

struct Segmentation {
  int height = 0, width = 0;
  int count = 0;
  /// Per-pixel segment id in [0, count), row-major.
  std::vector<int> labels;
};

/// sqrt(n) x sqrt(n) near-equal rectangles; n must be a perfect square.
Segmentation grid_segments(int height, int width, int n_segments);

/// SLIC-style superpixels: k-means over (color, position) seeded on a
/// regular grid, `iterations` Lloyd steps. Empty segments are dropped and
/// ids compacted in raster order of first appearance.
Segmentation slic_segments(const ImageTensor& image, int n_segments, double compactness = 10.0,
                           int iterations = 10);

}  // namespace simexplain
