#include "simexplain/synth.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <set>

#include "simexplain/error.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace {

struct Color {
  const char* name;
  double r, g, b;
};

constexpr std::array<Color, 8> kPalette{{{"red", 0.90, 0.15, 0.10},
                                         {"blue", 0.15, 0.30, 0.90},
                                         {"yellow", 0.90, 0.85, 0.15},
                                         {"green", 0.20, 0.80, 0.30},
                                         {"magenta", 0.85, 0.20, 0.80},
                                         {"cyan", 0.20, 0.85, 0.85},
                                         {"orange", 0.95, 0.55, 0.10},
                                         {"white", 0.92, 0.92, 0.92}}};

constexpr std::array<const char*, 4> kPatterns{"solid", "hstripes", "vstripes", "checker"};

// Attribute a: color a % 8, pattern cycles with a so neighbouring attributes
// differ in both.
const Color& color_of(int a) { return kPalette[static_cast<std::size_t>(a) % kPalette.size()]; }
int pattern_of(int a) { return (a + a / 8) % static_cast<int>(kPatterns.size()); }

bool pattern_on(int pattern, int dy, int dx) {
  switch (pattern) {
    case 0: return true;
    case 1: return (dy / 2) % 2 == 0;
    case 2: return (dx / 2) % 2 == 0;
    default: return ((dy / 3) + (dx / 3)) % 2 == 0;
  }
}

}  // namespace

std::string motif_name(int attribute) {
  std::string name = std::string(color_of(attribute).name) + "_" + kPatterns[pattern_of(attribute)];
  if (attribute >= 8) name += "_" + std::to_string(attribute / 8);
  return name;
}

std::vector<int> SyntheticSpec::resolved_relevant() const {
  if (!relevant_attributes.empty()) return relevant_attributes;
  std::vector<int> r(std::max(1, n_attributes / 2));
  std::iota(r.begin(), r.end(), 0);
  return r;
}

Dataset synth_generate(const SyntheticSpec& spec) {
  if (spec.n_images < 4) throw InvalidArgument("synth: n_images must be >= 4");
  if (spec.n_attributes < 1) throw InvalidArgument("synth: n_attributes must be >= 1");
  if (spec.side < 12) throw InvalidArgument("synth: side must be >= 12");
  if (spec.min_motifs < 1 || spec.max_motifs < spec.min_motifs || spec.max_motifs > 9)
    throw InvalidArgument("synth: motif counts must satisfy 1 <= min <= max <= 9");
  const auto relevant = spec.resolved_relevant();
  for (int r : relevant)
    if (r < 0 || r >= spec.n_attributes) throw InvalidArgument("synth: relevant attribute out of range");

  auto rng = make_rng(spec.seed, 0x5e);
  std::normal_distribution<double> noise(0.0, spec.noise);
  const int side = spec.side;
  const int slot = side / 3;
  const int motif_min = std::max(4, slot * 2 / 3);
  const int motif_max = std::max(motif_min, slot - 2);
  const std::set<int> relevant_set(relevant.begin(), relevant.end());

  Dataset ds;
  std::vector<std::string> names;
  for (int a = 0; a < spec.n_attributes; ++a) names.push_back(motif_name(a));
  ds.catalog = AttributeCatalog(names);
  ds.labels.assign(static_cast<std::size_t>(spec.n_images) * spec.n_attributes, 0);
  ds.placements.resize(spec.n_images);

  for (int i = 0; i < spec.n_images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img%04d", i);
    ds.ids.emplace_back(id);

    const int count = std::uniform_int_distribution<int>(
        spec.min_motifs, std::min(spec.max_motifs, spec.n_attributes))(rng);
    std::vector<int> attrs(spec.n_attributes);
    std::iota(attrs.begin(), attrs.end(), 0);
    std::shuffle(attrs.begin(), attrs.end(), rng);
    attrs.resize(count);
    std::vector<int> slots(9);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);

    std::vector<double> px(static_cast<std::size_t>(side) * side * 3, spec.background);
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      const int a = attrs[k];
      const int size = std::uniform_int_distribution<int>(motif_min, motif_max)(rng);
      const int sy = (slots[k] / 3) * slot, sx = (slots[k] % 3) * slot;
      const int oy = sy + std::uniform_int_distribution<int>(0, slot - size)(rng);
      const int ox = sx + std::uniform_int_distribution<int>(0, slot - size)(rng);
      const auto& col = color_of(a);
      const int pat = pattern_of(a);
      for (int y = oy; y < oy + size; ++y)
        for (int x = ox; x < ox + size; ++x) {
          const std::size_t p = (static_cast<std::size_t>(y) * side + x) * 3;
          const double f = pattern_on(pat, y - oy, x - ox) ? 1.0 : 0.35;
          px[p] = col.r * f;
          px[p + 1] = col.g * f;
          px[p + 2] = col.b * f;
        }
      ds.placements[i].push_back({a, oy, ox, size, size});
      ds.labels[static_cast<std::size_t>(i) * spec.n_attributes + a] = 1;
    }
    // Quantize through float so on-disk and in-memory images agree exactly.
    for (auto& v : px) v = static_cast<double>(static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0)));
    ds.images.emplace_back(ImageShape{side, side, 3}, std::move(px));
  }
  ds.rebuild_index();

  // Split images, then pair each query with references from the same split
  // that share at least one relevant attribute.
  std::vector<int> order(spec.n_images);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(spec.train_frac * spec.n_images);
  const int n_val = static_cast<int>(spec.val_frac * spec.n_images);
  std::vector<Split> split_of(spec.n_images);
  for (int k = 0; k < spec.n_images; ++k)
    split_of[order[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);

  ds.image_splits = split_of;

  auto shares_relevant = [&](int a, int b) {
    for (int r : relevant_set)
      if (ds.labels[static_cast<std::size_t>(a) * spec.n_attributes + r] &&
          ds.labels[static_cast<std::size_t>(b) * spec.n_attributes + r])
        return true;
    return false;
  };
  for (int q = 0; q < spec.n_images; ++q) {
    std::vector<int> cands;
    for (int r = 0; r < spec.n_images; ++r)
      if (r != q && split_of[r] == split_of[q] && shares_relevant(q, r)) cands.push_back(r);
    std::shuffle(cands.begin(), cands.end(), rng);
    const int take = std::min<int>(spec.pairs_per_query, static_cast<int>(cands.size()));
    for (int k = 0; k < take; ++k) ds.pairs.push_back({ds.ids[q], ds.ids[cands[k]], split_of[q]});
  }
  ds.validate();
  return ds;
}

Dataset synth_generate(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  auto ds = synth_generate(spec);
  save_dataset(dir, ds);
  return ds;
}

}  // namespace simexplain
