#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace simexplain {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return pixels() * channels; }
  bool operator==(const ImageShape&) const = default;
};

/// H x W x C image, row-major with channels innermost, values in [0, 1].
///
/// Values are held as double in memory so perturbation math and gradient
/// checks stay exact; on disk images are 32-bit floats.
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Zero image.
  explicit ImageTensor(ImageShape shape);
  /// Validates length, finiteness and range; throws InvalidData.
  ImageTensor(ImageShape shape, std::vector<double> data);

  const ImageShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c];
  }

 private:
  ImageShape shape_;
  std::vector<double> data_;
};

/// Plain rows x cols scalar grid; the working type for saliency maps, masks
/// and activation maps.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0);
  Grid(int r, int c, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Elementwise `query * keep + fill * (1 - keep)` where `keep` is a per-pixel
/// grid at image resolution broadcast over channels. `fill` may be null (zeros).
ImageTensor blend(const ImageTensor& query, const Grid& keep, const ImageTensor* fill = nullptr);

}  // namespace simexplain
