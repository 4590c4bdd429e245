#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "simexplain/tensor.hpp"

namespace simexplain {

class AttributeCatalog {
 public:
  AttributeCatalog() = default;
  /// Throws InvalidData on empty list, empty or duplicate names.
  explicit AttributeCatalog(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct ImagePair {
  std::string query_id;
  std::string reference_id;
  Split split = Split::Train;
};

/// Axis-aligned box of a rendered motif; only present on synthetic data.
struct Placement {
  int attribute = 0;
  int y = 0, x = 0, h = 0, w = 0;
  bool contains(int py, int px) const { return py >= y && py < y + h && px >= x && px < x + w; }
};

struct Dataset {
  AttributeCatalog catalog;
  std::vector<std::string> ids;
  std::vector<ImageTensor> images;
  /// N x A, row-major, values 0/1.
  std::vector<std::uint8_t> labels;
  std::vector<ImagePair> pairs;
  /// Per image, empty when the manifest carries no placement block.
  std::vector<std::vector<Placement>> placements;
  /// Per-image split; empty when the manifest gives none, in which case an
  /// image belongs to the split of the pairs that mention it.
  std::vector<Split> image_splits;

  std::size_t num_images() const { return images.size(); }
  std::size_t num_attributes() const { return catalog.size(); }
  std::size_t index_of(const std::string& id) const;
  const ImageTensor& image(const std::string& id) const { return images[index_of(id)]; }
  std::vector<std::uint8_t> label_row(std::size_t image_index) const;
  std::vector<std::uint8_t> label_row(const std::string& id) const { return label_row(index_of(id)); }
  std::vector<ImagePair> pairs_in(Split s) const;
  /// Images of the split: from image_splits when present (index order),
  /// otherwise images referenced by the split's pairs in first-appearance order.
  std::vector<std::size_t> images_in(Split s) const;

  /// Checks every invariant; throws IntegrityError / InvalidData.
  void validate() const;
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Manifest is JSON: {"format":"simexplain-dataset","version":1,
/// "attributes":[...], "images":[{"id","path","split"?}], "labels":"labels.csv",
/// "pairs":"pairs.csv", "placements"?:{id:[[attr,y,x,h,w],...]}}.
/// Paths are relative to the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json, images/<id>.grid, labels.csv and pairs.csv under dir.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

}  // namespace simexplain
