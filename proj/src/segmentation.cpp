#include "simexplain/segmentation.hpp"

#include <cmath>
#include <limits>

#include "simexplain/error.hpp"

namespace simexplain {

namespace {

int perfect_root(int n) {
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (r < 1 || r * r != n) throw InvalidArgument("segment count must be a perfect square, got " + std::to_string(n));
  return r;
}

}  // namespace

Segmentation grid_segments(int height, int width, int n_segments) {
  const int g = perfect_root(n_segments);
  if (g > height || g > width) throw InvalidArgument("more grid segments than pixels per side");
  Segmentation s{height, width, n_segments, std::vector<int>(static_cast<std::size_t>(height) * width)};
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(static_cast<long long>(y) * g / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(static_cast<long long>(x) * g / width);
      s.labels[static_cast<std::size_t>(y) * width + x] = sy * g + sx;
    }
  }
  return s;
}

Segmentation slic_segments(const ImageTensor& image, int n_segments, double compactness, int iterations) {
  const int h = image.height(), w = image.width(), ch = image.channels();
  const int g = perfect_root(n_segments);
  const double step = std::sqrt(static_cast<double>(h) * w / n_segments);
  struct Center {
    double y, x;
    std::vector<double> color;
  };
  std::vector<Center> centers;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      Center c{(i + 0.5) * h / g, (j + 0.5) * w / g, std::vector<double>(ch)};
      const int py = std::min(h - 1, static_cast<int>(c.y)), px = std::min(w - 1, static_cast<int>(c.x));
      for (int k = 0; k < ch; ++k) c.color[k] = image.at(py, px, k);
      centers.push_back(std::move(c));
    }
  const double spatial = (compactness / step) * (compactness / step);
  std::vector<int> labels(static_cast<std::size_t>(h) * w, 0);
  // Color distances are on a [0,1] scale; stretch them to be comparable with
  // the compactness-weighted spatial term.
  const double color_scale = 100.0 * 100.0;
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < centers.size(); ++c) {
          const auto& cc = centers[c];
          const double dy = y - cc.y, dx = x - cc.x;
          if (std::abs(dy) > 2 * step || std::abs(dx) > 2 * step) continue;
          double dc = 0;
          for (int k = 0; k < ch; ++k) {
            const double d = image.at(y, x, k) - cc.color[k];
            dc += d * d;
          }
          const double dist = color_scale * dc + spatial * (dy * dy + dx * dx);
          if (dist < best) {
            best = dist;
            arg = static_cast<int>(c);
          }
        }
        labels[static_cast<std::size_t>(y) * w + x] = arg;
      }
    std::vector<Center> acc(centers.size(), Center{0, 0, std::vector<double>(ch, 0.0)});
    std::vector<int> counts(centers.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int l = labels[static_cast<std::size_t>(y) * w + x];
        acc[l].y += y;
        acc[l].x += x;
        for (int k = 0; k < ch; ++k) acc[l].color[k] += image.at(y, x, k);
        ++counts[l];
      }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) continue;
      centers[c].y = acc[c].y / counts[c];
      centers[c].x = acc[c].x / counts[c];
      for (int k = 0; k < ch; ++k) centers[c].color[k] = acc[c].color[k] / counts[c];
    }
  }
  std::vector<int> remap(centers.size(), -1);
  Segmentation s{h, w, 0, std::move(labels)};
  for (auto& l : s.labels) {
    if (remap[l] < 0) remap[l] = s.count++;
    l = remap[l];
  }
  return s;
}

}  // namespace simexplain
