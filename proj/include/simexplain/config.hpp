#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simexplain/attrmodel.hpp"
#include "simexplain/discovery.hpp"
#include "simexplain/explain.hpp"
#include "simexplain/saliency.hpp"
#include "simexplain/synth.hpp"
#include "simexplain/triplet_scorer.hpp"

namespace simexplain {

enum class ScorerKind { Triplet, Linear, External };

struct ScorerConfig {
  ScorerKind kind = ScorerKind::Triplet;
  TripletConfig triplet;
  /// Linear: random weights from this seed (no training).
  int linear_dim = 8;
  /// External: child process argv and connection pool size.
  std::vector<std::string> command;
  int pool = 1;
};

struct EvalConfig {
  double step_frac = 0.01;
  /// Saliency variants scored by insertion/deletion, as "<method>/<fixed|dual>".
  std::vector<std::string> curve_methods{"sliding/fixed", "rise/fixed", "lime/fixed", "mask/fixed"};
  /// Test pairs used for the curve metrics (0 means all).
  int curve_pairs = 16;
  /// Also require the retrieved image's confidence in the removed attribute
  /// to be below 0.5 / A.
  bool removal_confidence_filter = false;
};

/// Saliency maps used as heatmap-loss targets: fixed-reference RISE against
/// the K most similar training images (train.k).
struct BankConfig {
  int n_masks = 500;
};

struct ExplainConfig {
  PhiWeights phi;
  double phi_step = 0.05;
};

/// Every knob of a run. Loaded from JSON; unknown keys are rejected and
/// absent keys keep these defaults. Stage seeds are not configurable on their
/// own: `seed` is copied into every stage.
struct RunConfig {
  std::uint64_t seed = 1;
  /// 0 = all cores.
  int threads = 0;
  SyntheticSpec synth;
  ScorerConfig scorer;
  SaliencyConfig saliency;
  BankConfig bank;
  AttrTrainConfig train;
  /// Also train the lambda = 0 attribute classifier for comparison.
  bool train_baseline = true;
  ExplainConfig explain;
  EvalConfig eval;
  DiscoveryConfig discovery;
  /// Run the discovery stage inside the pipeline.
  bool run_discovery = false;

  /// Copies `seed` into every stage config.
  void propagate_seed();
  void validate() const;
  std::string to_json() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string_view scorer_kind_name(ScorerKind k);

}  // namespace simexplain
