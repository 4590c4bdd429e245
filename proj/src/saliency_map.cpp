#include "simexplain/saliency_map.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "simexplain/error.hpp"

namespace simexplain {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::SlidingWindow: return "SlidingWindow";
    case Method::RISE: return "RISE";
    case Method::LIME: return "LIME";
    case Method::Mask: return "Mask";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (l == "sliding" || l == "sliding_window" || l == "slidingwindow" || l == "sw")
    return Method::SlidingWindow;
  if (l == "rise") return Method::RISE;
  if (l == "lime") return Method::LIME;
  if (l == "mask") return Method::Mask;
  throw InvalidArgument("unknown saliency method '" + std::string(s) + "'");
}

Grid SaliencyMap::to_grid() const {
  return Grid(rows, cols, std::vector<double>(data.begin(), data.end()));
}

bool SaliencyMap::degenerate() const {
  return normalized && std::all_of(data.begin(), data.end(), [](float v) { return v == 0.0f; });
}

namespace {

// Source coordinate of output index i under align-corners sampling.
double source_coord(int i, int in, int out) {
  if (out == 1) return 0.5 * (in - 1);
  return static_cast<double>(i) * (in - 1) / (out - 1);
}

Grid bilinear(const Grid& in, int out_rows, int out_cols) {
  Grid out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r) {
    const double sy = source_coord(r, in.rows, out_rows);
    const int y0 = std::min(static_cast<int>(sy), in.rows - 1);
    const int y1 = std::min(y0 + 1, in.rows - 1);
    const double ty = sy - y0;
    for (int c = 0; c < out_cols; ++c) {
      const double sx = source_coord(c, in.cols, out_cols);
      const int x0 = std::min(static_cast<int>(sx), in.cols - 1);
      const int x1 = std::min(x0 + 1, in.cols - 1);
      const double tx = sx - x0;
      // a + t*(b-a) keeps constant inputs exact.
      const double top = in(y0, x0) + tx * (in(y0, x1) - in(y0, x0));
      const double bot = in(y1, x0) + tx * (in(y1, x1) - in(y1, x0));
      out(r, c) = top + ty * (bot - top);
    }
  }
  return out;
}

std::pair<int, int> pool_range(int i, int in, int out) {
  const int lo = static_cast<int>(static_cast<long long>(i) * in / out);
  int hi = static_cast<int>(static_cast<long long>(i + 1) * in / out);
  if (hi <= lo) hi = lo + 1;
  return {lo, std::min(hi, in)};
}

Grid average_pool(const Grid& in, int out_rows, int out_cols) {
  Grid out(out_rows, out_cols);
  for (int r = 0; r < out_rows; ++r) {
    const auto [y0, y1] = pool_range(r, in.rows, out_rows);
    for (int c = 0; c < out_cols; ++c) {
      const auto [x0, x1] = pool_range(c, in.cols, out_cols);
      double sum = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) sum += in(y, x);
      out(r, c) = sum / ((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace

Grid resize_map(const Grid& in, int out_rows, int out_cols, ResizeMode mode) {
  if (in.rows < 1 || in.cols < 1 || in.data.empty())
    throw InvalidArgument("resize_map: empty input grid");
  if (out_rows < 1 || out_cols < 1) throw InvalidArgument("resize_map: output dims must be >= 1");
  return mode == ResizeMode::Bilinear ? bilinear(in, out_rows, out_cols)
                                      : average_pool(in, out_rows, out_cols);
}

Grid resize_bilinear_adjoint(const Grid& g, int in_rows, int in_cols) {
  if (in_rows < 1 || in_cols < 1) throw InvalidArgument("resize_bilinear_adjoint: bad source dims");
  Grid out(in_rows, in_cols);
  for (int r = 0; r < g.rows; ++r) {
    const double sy = source_coord(r, in_rows, g.rows);
    const int y0 = std::min(static_cast<int>(sy), in_rows - 1);
    const int y1 = std::min(y0 + 1, in_rows - 1);
    const double ty = sy - y0;
    for (int c = 0; c < g.cols; ++c) {
      const double sx = source_coord(c, in_cols, g.cols);
      const int x0 = std::min(static_cast<int>(sx), in_cols - 1);
      const int x1 = std::min(x0 + 1, in_cols - 1);
      const double tx = sx - x0;
      const double v = g(r, c);
      out(y0, x0) += v * (1 - ty) * (1 - tx);
      out(y0, x1) += v * (1 - ty) * tx;
      out(y1, x0) += v * ty * (1 - tx);
      out(y1, x1) += v * ty * tx;
    }
  }
  return out;
}

Normalized normalize_map(const Grid& in) {
  if (in.data.empty()) throw InvalidArgument("normalize_map: empty grid");
  for (double v : in.data)
    if (!std::isfinite(v)) throw InvalidData("normalize_map: non-finite value");
  const auto [lo, hi] = std::minmax_element(in.data.begin(), in.data.end());
  Normalized out{Grid(in.rows, in.cols), false};
  const double mn = *lo, range = *hi - *lo;
  if (range == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < in.data.size(); ++i) out.grid.data[i] = (in.data[i] - mn) / range;
  return out;
}

SaliencyMap make_saliency_map(const Grid& raw, Method method, bool fixed_reference) {
  const auto n = normalize_map(raw);
  SaliencyMap m;
  m.rows = raw.rows;
  m.cols = raw.cols;
  m.data.assign(n.grid.data.begin(), n.grid.data.end());
  m.method = method;
  m.fixed_reference = fixed_reference;
  m.normalized = true;
  return m;
}

Grid to_match_resolution(const Grid& map) {
  return normalize_map(resize_map(map, kMatchResolution, kMatchResolution, ResizeMode::AveragePool))
      .grid;
}

std::size_t argmax_raster(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace simexplain
