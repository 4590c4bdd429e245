#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "simexplain/dataset.hpp"
#include "simexplain/saliency.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

struct DiscoveryConfig {
  int k_nn = 10;
  int peak_grid = kMatchResolution;
  int top_n = 5;
  int patch = 30;
  int n_clusters = 4;
  std::uint64_t seed = 0;
  SaliencyConfig saliency;

  /// Throws InvalidArgument on non-positive values or a patch larger than
  /// the image.
  void validate(int height, int width) const;
};

/// Grid cell (row-major) holding the first maximum of the map.
int peak_bin(const SaliencyMap& map, int grid, bool* degenerate = nullptr);

/// Image-space pixel (y, x) of the map's first maximum.
std::pair<int, int> peak_pixel(const SaliencyMap& map, int height, int width);

struct PatchRect {
  int y = 0, x = 0, size = 0;
};

/// Square crop centred on (cy, cx), shifted to stay inside the image.
PatchRect patch_around(int cy, int cx, int size, int height, int width);
/// The crop bilinearly resized back to the image resolution.
ImageTensor crop_and_upsample(const ImageTensor& img, const PatchRect& r);

struct KMeansResult {
  std::vector<int> assign;
  std::vector<std::vector<double>> centroids;
  /// Objective (sum of squared distances) after each assignment step.
  std::vector<double> objective;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; an empty cluster is reseeded
/// to the point farthest from its centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iter = 50);

struct DiscoveredPatch {
  std::size_t image = 0;  // source (reference) image
  std::size_t query = 0;  // query that selected it
  PatchRect rect;
  int cluster = -1;
};

struct ClusterAssignment {
  int n_clusters = 0;
  /// Per dataset image, sorted cluster ids (empty for images without a patch).
  std::vector<std::vector<int>> image_clusters;
  /// Unit-normalized centroids in embedding space.
  std::vector<std::vector<double>> centroids;
  std::vector<DiscoveredPatch> patches;
  std::vector<double> objective;
};

/// Embedding scaled to unit length (zero vector stays zero).
std::vector<double> unit_embedding(const Scorer& scorer, const ImageTensor& img);

/// The six-step saliency-guided discovery over the pool of images.
ClusterAssignment discover(const Dataset& ds, std::span<const std::size_t> pool,
                           const Scorer& scorer, const DiscoveryConfig& cfg);

/// Baseline: every pool image gets one uniformly random cluster.
ClusterAssignment random_assignment(const Dataset& ds, std::span<const std::size_t> pool,
                                    int n_clusters, std::uint64_t seed);
/// Baseline: k-means over full-image embeddings, one cluster per image.
ClusterAssignment full_frame_assignment(const Dataset& ds, std::span<const std::size_t> pool,
                                        const Scorer& scorer, int n_clusters, std::uint64_t seed);

/// Fraction of patches whose motif (the planted attribute under the patch
/// centre, -1 for background) is the majority motif of their cluster.
double cluster_purity(const ClusterAssignment& a, const Dataset& ds);

struct DiscoveryRemoval {
  double patch = 0.0, random = 0.0, full_frame = 0.0;
  std::size_t patch_skipped = 0, random_skipped = 0, full_frame_skipped = 0;
};

/// Attribute-removal delta with discovered clusters as attributes. The
/// patch method explains a pair by the cluster nearest to the query's own
/// salient patch; the baselines by the query's assigned cluster. Only images
/// carrying at least one cluster can be retrieved.
DiscoveryRemoval removal_eval_discovered(const ClusterAssignment& patch_assignment,
                                         const Dataset& ds, std::span<const std::size_t> pool,
                                         const Scorer& scorer, std::span<const ImagePair> pairs,
                                         const DiscoveryConfig& cfg);

}  // namespace simexplain
