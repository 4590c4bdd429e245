#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "simexplain/dataset.hpp"
#include "simexplain/saliency_map.hpp"
#include "simexplain/tensor.hpp"

namespace simexplain {

/// Features at match resolution: kMatchResolution^2 cells x dim, cell-major.
struct FeatureGrid {
  int dim = 0;
  std::vector<double> data;

  static constexpr int kCells = kMatchResolution * kMatchResolution;
  const double* cell(int c) const { return data.data() + static_cast<std::size_t>(c) * dim; }
};

/// Fixed random filter bank: `filters` ksize x ksize x C kernels with bias,
/// ReLU, then average-pooled to the match resolution. Never trained.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(ImageShape input, int filters, int ksize, std::uint64_t seed);

  FeatureGrid extract(const ImageTensor& image) const;

  ImageShape input() const { return input_; }
  int filters() const { return filters_; }
  int ksize() const { return ksize_; }
  std::uint64_t seed() const { return seed_; }
  int dim() const { return filters_; }

 private:
  ImageShape input_;
  int filters_ = 0, ksize_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> weight_, bias_;
};

struct AttrPrediction {
  std::vector<double> logits;
  /// Softmax over attributes.
  std::vector<double> confidences;
  /// Un-normalized activation maps, one per attribute, at match resolution.
  std::vector<Grid> maps;
};

struct AttributeModel {
  FeatureExtractor extractor;
  /// Per-channel standardization fitted on the training images.
  std::vector<double> feat_mean, feat_std;
  int n_attributes = 0;
  /// A x D row-major.
  std::vector<double> head;
  std::vector<double> bias;

  int dim() const { return extractor.dim(); }
  /// Extracted and standardized features.
  FeatureGrid features(const ImageTensor& image) const;
  AttrPrediction forward(const ImageTensor& image) const;
  AttrPrediction forward_features(const FeatureGrid& f) const;
  /// Throws InvalidData on non-finite parameters or size mismatches.
  void validate() const;
};

/// Binary label row scaled so its positives sum to one. All-zero rows give
/// an empty vector.
std::vector<double> scaled_labels(std::span<const std::uint8_t> row);

/// Sum over attributes of 0.5 d^2 when |d| <= 1, else d, with d = label - conf.
double huber_loss(std::span<const double> conf, std::span<const double> labels);
/// True when every residual falls in the quadratic branch.
bool huber_quadratic_only(std::span<const double> conf, std::span<const double> labels);

/// (1/|saliency|) * sum over saliency maps of min over gt maps of the L2
/// distance. Maps must share dimensions (InvalidArgument otherwise); an
/// empty gt set gives 0.
double heatmap_loss(std::span<const Grid> saliency, std::span<const Grid> gt_maps);

struct AttrTrainConfig {
  int epochs = 300;
  double lr = 5e-4;
  double lambda = 5e-3;
  /// Saliency maps per training image (similar references).
  int k = 5;
  int batch = 16;
  int filters = 48;
  int ksize = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Saliency maps for the training objective: image id -> maps of that image
/// computed against up to K similar references.
using SaliencyBank = std::map<std::string, std::vector<SaliencyMap>>;

/// One training example with everything the loss needs.
struct AttrSample {
  const FeatureGrid* features = nullptr;
  std::vector<double> labels;  // scaled
  std::vector<int> gt;         // attribute indices
  std::vector<Grid> saliency;  // match resolution, normalized
};

/// Mean over samples of huber + lambda * heatmap, with gradients w.r.t. the
/// head weights and bias (same layout as the model).
double attr_loss_and_grad(const AttributeModel& model, std::span<const AttrSample> batch,
                          double lambda, std::vector<double>* grad_head,
                          std::vector<double>* grad_bias);

struct AttrTrainResult {
  AttributeModel model;
  int best_epoch = 0;
  double best_val_map = 0.0;
  std::vector<double> val_map_history;
  std::vector<double> loss_history;
  std::size_t skipped_unlabeled = 0;
  bool heatmap_term_used = false;
};

/// Adam over the head only; keeps the snapshot with the best validation mAP.
AttrTrainResult train_attribute_model(const Dataset& ds, const SaliencyBank& bank,
                                      const AttrTrainConfig& cfg);

/// Macro-averaged average precision over attributes with at least one
/// positive among `images`; `skipped` receives the count of the others.
double model_map(const AttributeModel& model, const Dataset& ds, std::span<const std::size_t> images,
                 std::size_t* skipped = nullptr);

void save_model(const std::filesystem::path& path, const AttributeModel& model);
AttributeModel load_model(const std::filesystem::path& path);

void save_bank(const std::filesystem::path& dir, const SaliencyBank& bank);
SaliencyBank load_bank(const std::filesystem::path& dir);

}  // namespace simexplain
