#include "simexplain/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "simexplain/error.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

namespace {
Exec g_exec = Exec::Parallel;
}

Exec default_exec() { return g_exec; }
void set_default_exec(Exec e) { g_exec = e; }

int set_threads(int n) {
  const int procs = omp_get_num_procs();
  if (n <= 0) n = procs;
  omp_set_num_threads(n);
  return n;
}

namespace kernels {

void linear_embed(std::span<const double> weight, int dim, std::span<const double> x,
                  std::span<double> out) {
  const std::size_t p = x.size();
  for (int d = 0; d < dim; ++d) {
    const double* w = weight.data() + static_cast<std::size_t>(d) * p;
    double acc = 0.0;
    for (std::size_t i = 0; i < p; ++i) acc += w[i] * x[i];
    out[d] = acc;
  }
}

std::vector<double> linear_embed_batch(std::span<const double> weight, int dim,
                                       std::span<const ImageTensor> images, Exec exec) {
  const std::size_t n = images.size();
  std::vector<double> out(n * dim);
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i)
      linear_embed(weight, dim, images[i].data(), std::span(out).subspan(i * dim, dim));
    return out;
  }
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    linear_embed(weight, dim, images[i].data(), std::span(out).subspan(i * dim, dim));
  return out;
}

void relu_pool(std::span<const double> proj, std::span<const double> bias, int channels,
               std::span<const double> x, std::span<double> out) {
  const std::size_t nf = bias.size();
  const std::size_t pixels = x.size() / channels;
  const double* px = x.data();
  for (std::size_t f = 0; f < nf; ++f) {
    const double* a = proj.data() + f * channels;
    double acc = 0.0;
    if (channels == 3) {
      const double a0 = a[0], a1 = a[1], a2 = a[2], b = bias[f];
      for (std::size_t p = 0; p < pixels; ++p)
        acc += std::max(0.0, b + a0 * px[3 * p] + a1 * px[3 * p + 1] + a2 * px[3 * p + 2]);
    } else {
      for (std::size_t p = 0; p < pixels; ++p) {
        double pre = bias[f];
        for (int c = 0; c < channels; ++c) pre += a[c] * px[p * channels + c];
        acc += std::max(0.0, pre);
      }
    }
    out[f] = acc / static_cast<double>(pixels);
  }
}

std::vector<double> relu_pool_batch(std::span<const double> proj, std::span<const double> bias,
                                    int channels, std::span<const ImageTensor> images, Exec exec) {
  const std::size_t n = images.size(), nf = bias.size();
  std::vector<double> out(n * nf);
  auto one = [&](std::size_t i) {
    relu_pool(proj, bias, channels, images[i].data(), std::span(out).subspan(i * nf, nf));
  };
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return out;
  }
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) one(static_cast<std::size_t>(i));
  return out;
}

std::vector<double> cosine_rows(std::span<const double> ref, std::span<const double> rows, int dim,
                                Exec exec) {
  const std::size_t n = rows.size() / dim;
  std::vector<double> out(n);
  auto one = [&](std::size_t i) { out[i] = cosine(ref, rows.subspan(i * dim, dim)); };
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) one(i);
  } else {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) one(static_cast<std::size_t>(i));
  }
  return out;
}

Grid weighted_mask_sum(std::span<const double> weights, std::span<const Grid> masks, Exec exec) {
  if (weights.size() != masks.size() || masks.empty())
    throw InvalidArgument("weighted_mask_sum: size mismatch or empty");
  return weighted_mask_sum(
      weights, masks[0].rows, masks[0].cols,
      [&](std::size_t i, Grid& out) { out = masks[i]; }, exec);
}

Grid weighted_mask_sum(std::span<const double> weights, int rows, int cols,
                       const std::function<void(std::size_t, Grid&)>& mask_at, Exec exec) {
  std::vector<Grid> partial(num_chunks(weights.size()), Grid(rows, cols));
  for_each_chunk(weights.size(), kChunk, exec, [&](std::size_t c, std::size_t b, std::size_t e) {
    auto& acc = partial[c].data;
    Grid m;
    for (std::size_t i = b; i < e; ++i) {
      mask_at(i, m);
      if (m.rows != rows || m.cols != cols)
        throw InvalidArgument("weighted_mask_sum: mask dims mismatch");
      const double w = weights[i];
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * m.data[k];
    }
  });
  Grid total(rows, cols);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < total.data.size(); ++k) total.data[k] += p.data[k];
  return total;
}

Coverage occlusion_coverage(std::span<const Window> windows, std::span<const double> scores,
                            int height, int width, Exec exec) {
  if (windows.size() != scores.size()) throw InvalidArgument("occlusion_coverage: size mismatch");
  const std::size_t nchunks = num_chunks(windows.size());
  std::vector<Coverage> partial(nchunks, Coverage{Grid(height, width), Grid(height, width)});
  for_each_chunk(windows.size(), kChunk, exec, [&](std::size_t c, std::size_t b, std::size_t e) {
    auto& part = partial[c];
    for (std::size_t i = b; i < e; ++i) {
      const auto& w = windows[i];
      for (int y = w.y; y < w.y + w.side; ++y)
        for (int x = w.x; x < w.x + w.side; ++x) {
          part.score_sum(y, x) += scores[i];
          part.count(y, x) += 1.0;
        }
    }
  });
  Coverage total{Grid(height, width), Grid(height, width)};
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < total.score_sum.data.size(); ++k) {
      total.score_sum.data[k] += p.score_sum.data[k];
      total.count.data[k] += p.count.data[k];
    }
  }
  return total;
}

}  // namespace kernels
}  // namespace simexplain
