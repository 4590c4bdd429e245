#pragma once

#include <functional>
#include <span>
#include <vector>

#include "simexplain/parallel.hpp"
#include "simexplain/tensor.hpp"

// Hot loops of the perturbation methods, each with a serial reference and an
// OpenMP path selected by Exec. Both paths produce bit-identical output.
namespace simexplain::kernels {

/// out = W x for a D x P row-major weight matrix.
void linear_embed(std::span<const double> weight, int dim, std::span<const double> x,
                  std::span<double> out);

/// Embeds every image; result is N x D row-major.
std::vector<double> linear_embed_batch(std::span<const double> weight, int dim,
                                       std::span<const ImageTensor> images, Exec exec);

/// out[f] = mean over pixels of relu(proj[f] . pixel + bias[f]); proj is
/// F x C row-major, x is H*W*C interleaved.
void relu_pool(std::span<const double> proj, std::span<const double> bias, int channels,
               std::span<const double> x, std::span<double> out);

/// relu_pool for every image; result is N x F row-major.
std::vector<double> relu_pool_batch(std::span<const double> proj, std::span<const double> bias,
                                    int channels, std::span<const ImageTensor> images, Exec exec);

/// Cosine between `ref` and each row of `rows` (N x D) with eps-guarded norms.
std::vector<double> cosine_rows(std::span<const double> ref, std::span<const double> rows, int dim,
                                Exec exec);

/// Sum_i weights[i] * masks[i]; partial sums per kChunk block, combined in
/// block order.
Grid weighted_mask_sum(std::span<const double> weights, std::span<const Grid> masks, Exec exec);

/// Same reduction with masks produced on demand by mask_at(i, out) so the
/// full set never has to be resident.
Grid weighted_mask_sum(std::span<const double> weights, int rows, int cols,
                       const std::function<void(std::size_t, Grid&)>& mask_at, Exec exec);

struct Window {
  int y = 0, x = 0, side = 0;
};

struct Coverage {
  Grid score_sum;
  Grid count;
};

/// For each pixel: sum of scores and number of windows covering it.
Coverage occlusion_coverage(std::span<const Window> windows, std::span<const double> scores,
                            int height, int width, Exec exec);

}  // namespace simexplain::kernels
