#pragma once

#include <cstdint>
#include <vector>

#include "simexplain/dataset.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

struct TripletConfig {
  int dim = 8;
  /// Width of the fixed per-pixel feature layer.
  int features = 32;
  double margin = 0.2;
  int epochs = 200;
  double lr = 0.05;
  double weight_decay = 1e-4;
  int triplets_per_epoch = 64;
  std::uint64_t seed = 1;
  /// Attributes defining "similar": anchor and positive share one of them,
  /// the negative shares none with the anchor.
  std::vector<int> relevant_attributes;
};

/// Fixed random per-pixel ReLU features, averaged over the image and
/// standardized with train-split statistics, followed by a linear embedding
/// W fit with a cosine triplet loss by plain SGD on the train split. Score
/// is the cosine of embeddings. Training is a pure function of
/// (dataset, config).
class TripletToyScorer : public Scorer {
 public:
  static TripletToyScorer train(const Dataset& ds, const TripletConfig& cfg);

  TripletToyScorer(ImageShape shape, std::vector<double> proj, std::vector<double> bias,
                   std::vector<double> feat_mean, std::vector<double> feat_std, int dim,
                   std::vector<double> weight);

  ScorerCaps caps() const override { return ScorerCaps{true, true, true, 1 << 20}; }
  ImageShape input_shape() const override { return shape_; }
  std::vector<double> score_batch(const ImageTensor& ref,
                                  std::span<const ImageTensor> queries) const override;
  Embedding embed(const ImageTensor& image) const override;
  std::vector<double> grad_query(const ImageTensor& ref, const ImageTensor& query) const override;

  int dim() const { return dim_; }
  int features() const { return static_cast<int>(bias_.size()); }
  std::span<const double> weight() const { return weight_; }
  double final_loss() const { return final_loss_; }
  void set_exec(Exec e) { exec_ = e; }

 private:
  std::vector<double> pooled(const ImageTensor& image) const;
  void standardize(std::span<double> f) const;

  ImageShape shape_;
  std::vector<double> proj_;  // F x C
  std::vector<double> bias_;  // F
  std::vector<double> feat_mean_, feat_std_;
  int dim_ = 0;
  std::vector<double> weight_;  // D x F
  double final_loss_ = 0.0;
  Exec exec_ = Exec::Parallel;
};

}  // namespace simexplain
