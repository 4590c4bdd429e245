#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simexplain/attrmodel.hpp"
#include "simexplain/config.hpp"
#include "simexplain/dataset.hpp"
#include "simexplain/eval.hpp"
#include "simexplain/explain.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

/// The run's similarity model. The triplet scorer is retrained from the
/// dataset's train split, which is deterministic, so every stage can rebuild
/// it instead of reading it back from disk.
std::unique_ptr<Scorer> make_scorer(const RunConfig& cfg, const Dataset& ds);

/// Up to k images of `pool` most similar to `image` (embedding cosine when
/// the scorer embeds, raw score otherwise), ties to the lower index; the image
/// itself is excluded.
std::vector<std::size_t> most_similar(const Scorer& scorer, const Dataset& ds, std::size_t image,
                                      std::span<const std::size_t> pool, int k);

/// Heatmap-loss targets: per training image, fixed-reference RISE with
/// n_masks masks against its train.k most similar training images.
SaliencyBank build_bank(const Scorer& scorer, const Dataset& ds, const RunConfig& cfg);

/// Saliency of every pair (query w.r.t. reference) under cfg.
std::vector<SaliencyMap> pair_saliency(const Scorer& scorer, const Dataset& ds,
                                       std::span<const ImagePair> pairs, const SaliencyConfig& cfg);

/// "<method>/<fixed|dual>" -> saliency config derived from base.
SaliencyConfig curve_method_config(const std::string& spec, const SaliencyConfig& base);

std::string prior_to_json(const PriorResult& prior, const AttributeCatalog& catalog);
Prior load_prior(const std::filesystem::path& path, std::size_t n_attributes);
std::string phi_to_json(const PhiFit& fit);
PhiWeights load_phi(const std::filesystem::path& path);

struct EvalInputs {
  const RunConfig* cfg = nullptr;
  const Dataset* ds = nullptr;
  const Scorer* scorer = nullptr;
  const AttributeModel* sane = nullptr;
  /// Lambda = 0 model; its mAP is reported as "classifier/<split>".
  const AttributeModel* classifier = nullptr;
  Prior prior;
  PhiWeights phi;
  /// Test-pair saliency under cfg.saliency; computed when empty.
  std::vector<SaliencyMap> test_maps;
};

/// Every metric of the report except the fit and discovery sections.
MetricsReport evaluate(const EvalInputs& in);

struct PipelineResult {
  MetricsReport report;
  /// Wall seconds per stage; kept out of report.json so it stays reproducible.
  std::map<std::string, double> seconds;
};

/// synth -> scorer -> bank -> train-attr (+ baseline) -> prior -> fit-phi ->
/// explain test pairs -> eval [-> discover]. Writes under out:
///   config.json, dataset/, bank/, model.sane, model.classifier, prior.json,
///   phi.json, explanations/<n>.smap + .json, report.json, timings.json.
PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace simexplain
