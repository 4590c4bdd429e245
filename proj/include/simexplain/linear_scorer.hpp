#pragma once

#include <cstdint>
#include <optional>

#include "simexplain/parallel.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

struct Rect {
  int y = 0, x = 0, h = 0, w = 0;
  bool contains(int py, int px) const { return py >= y && py < y + h && px >= x && px < x + w; }
};

struct LinearToyOptions {
  int dim = 8;
  std::uint64_t seed = 1;
  /// Pixels inside carry weights of scale plant_scale; everything else
  /// background_scale (0 makes the scorer blind outside the rectangle).
  std::optional<Rect> plant;
  double plant_scale = 1.0;
  double background_scale = 1.0;
};

/// embedding = W * flatten(image), score = cosine of embeddings. W is
/// D x (H*W*C), no bias.
class LinearToyScorer : public Scorer {
 public:
  LinearToyScorer(ImageShape shape, const LinearToyOptions& opts);
  LinearToyScorer(ImageShape shape, int dim, std::vector<double> weight);

  ScorerCaps caps() const override;
  ImageShape input_shape() const override { return shape_; }
  std::vector<double> score_batch(const ImageTensor& ref,
                                  std::span<const ImageTensor> queries) const override;
  Embedding embed(const ImageTensor& image) const override;
  std::vector<double> grad_query(const ImageTensor& ref, const ImageTensor& query) const override;

  int dim() const { return dim_; }
  std::span<const double> weight() const { return weight_; }
  void set_exec(Exec e) { exec_ = e; }

 protected:
  ImageShape shape_;
  int dim_ = 0;
  std::vector<double> weight_;
  Exec exec_ = Exec::Parallel;
};

}  // namespace simexplain
