#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "simexplain/dataset.hpp"

namespace simexplain {

/// Desk-scale synthetic dataset: every attribute is a colored, textured
/// motif rendered into one slot of a 3x3 layout, so labels and motif
/// locations are known exactly.
struct SyntheticSpec {
  int n_images = 160;
  int side = 56;
  int n_attributes = 8;
  int min_motifs = 1;
  int max_motifs = 3;
  double noise = 0.04;
  double background = 0.12;
  /// Attributes the similarity notion keys on; pairs share at least one.
  /// Empty means the first half of the catalog.
  std::vector<int> relevant_attributes;
  int pairs_per_query = 2;
  double train_frac = 0.6;
  double val_frac = 0.2;
  std::uint64_t seed = 1;

  std::vector<int> resolved_relevant() const;
};

Dataset synth_generate(const SyntheticSpec& spec);

/// Generates and writes the dataset under dir (see save_dataset).
Dataset synth_generate(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Attribute index -> human-readable motif name, e.g. "red_hstripes".
std::string motif_name(int attribute);

}  // namespace simexplain
