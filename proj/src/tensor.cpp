#include "simexplain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simexplain/error.hpp"

namespace simexplain {

ImageTensor::ImageTensor(ImageShape shape) : shape_(shape) {
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1)
    throw InvalidArgument("image dimensions must be >= 1");
  data_.assign(shape.size(), 0.0);
}

ImageTensor::ImageTensor(ImageShape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1)
    throw InvalidArgument("image dimensions must be >= 1");
  if (data_.size() != shape.size())
    throw InvalidData("image data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(shape.size()));
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvalidData("image value out of [0,1]: " + std::to_string(v));
  }
}

Grid::Grid(int r, int c, double fill) : rows(r), cols(c) {
  if (r < 1 || c < 1) throw InvalidArgument("grid dimensions must be >= 1");
  data.assign(static_cast<std::size_t>(r) * c, fill);
}

Grid::Grid(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (r < 1 || c < 1) throw InvalidArgument("grid dimensions must be >= 1");
  if (data.size() != static_cast<std::size_t>(r) * c)
    throw InvalidData("grid data length mismatch");
}

ImageTensor blend(const ImageTensor& query, const Grid& keep, const ImageTensor* fill) {
  const auto& s = query.shape();
  if (keep.rows != s.height || keep.cols != s.width)
    throw InvalidArgument("blend: keep grid must match image resolution");
  if (fill && !(fill->shape() == s)) throw InvalidArgument("blend: fill image shape mismatch");
  std::vector<double> out(query.size());
  auto q = query.data();
  const int c = s.channels;
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    const double k = keep.data[p];
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      const double v = fill ? q[i] * k + fill->data()[i] * (1.0 - k) : q[i] * k;
      out[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ImageTensor(s, std::move(out));
}

}  // namespace simexplain
