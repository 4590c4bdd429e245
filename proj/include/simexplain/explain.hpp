#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "simexplain/attrmodel.hpp"
#include "simexplain/dataset.hpp"
#include "simexplain/saliency.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain {

struct Prior {
  std::vector<double> p;
};

struct PhiWeights {
  double phi1 = 0.1;   // attribute confidence
  double phi2 = 0.9;   // saliency / activation map match
  double phi3 = 0.05;  // prior
  /// Throws InvalidArgument on non-finite or all-zero weights.
  void validate() const;
};

/// Everything the ranking needs for one (query, reference) pair.
struct PairCase {
  std::string query_id, reference_id;
  SaliencyMap saliency;
  /// Saliency at match resolution, normalized.
  Grid match;
  std::vector<double> confidence;
  /// Cosine between the match-resolution saliency and each normalized
  /// activation map; all zero when the saliency map is degenerate.
  std::vector<double> map_match;
  std::vector<std::uint8_t> gt;
};

/// cos(m, normalize(n_i)) for every attribute; zeros for a degenerate m.
std::vector<double> map_match_scores(const Grid& match, const AttrPrediction& pred);

PairCase make_case(const Scorer& scorer, const AttributeModel& model, const ImageTensor& ref,
                   const ImageTensor& query, const SaliencyConfig& cfg);
/// Case from a saliency map computed beforehand.
PairCase make_case(const AttributeModel& model, const ImageTensor& query, SaliencyMap saliency);
/// Builds cases for the pairs (in order); ground truth is the query's label row.
std::vector<PairCase> build_cases(const Scorer& scorer, const AttributeModel& model,
                                  const Dataset& ds, std::span<const ImagePair> pairs,
                                  const SaliencyConfig& cfg);
/// Same with maps[i] as the saliency of pairs[i].
std::vector<PairCase> build_cases(const AttributeModel& model, const Dataset& ds,
                                  std::span<const ImagePair> pairs, std::span<const SaliencyMap> maps);

struct PriorResult {
  Prior prior;
  std::vector<std::size_t> counts;
  std::size_t skipped = 0;
};

/// Add-one smoothed frequencies of the counted winners.
Prior prior_from_counts(std::span<const std::size_t> counts);
/// Winner per case: the ground-truth attribute with the highest map match
/// (first on ties). Cases without ground truth are skipped.
PriorResult estimate_prior(std::span<const PairCase> cases, int n_attributes);
PriorResult estimate_prior(const AttributeModel& model, const Scorer& scorer, const Dataset& ds,
                           std::span<const ImagePair> pairs, const SaliencyConfig& cfg);

/// e_i = phi1 * confidence_i + phi2 * map_match_i + phi3 * prior_i.
std::vector<double> explanation_scores(std::span<const double> confidence,
                                       std::span<const double> map_match, const Prior& prior,
                                       const PhiWeights& phi);
std::vector<double> explanation_scores(const PairCase& c, const Prior& prior, const PhiWeights& phi);

/// Attribute indices by score descending, lower index first on ties.
std::vector<int> rank_attributes(std::span<const double> scores);

struct PhiFit {
  PhiWeights phi;
  double accuracy = 0.0;
};

/// Grid search: phi1, phi2 over {0, step, ..., 1}, phi3 over {0, 0.05, 0.1},
/// excluding all zero. Maximizes top-1 accuracy; ties go to the larger phi2,
/// then the earlier grid point (phi1 then phi3 ascending).
PhiFit fit_phi(std::span<const PairCase> cases, const Prior& prior, double step = 0.05);

/// Top-1 accuracy of the phi ranking over the cases.
double ranking_accuracy(std::span<const PairCase> cases, const Prior& prior, const PhiWeights& phi);

struct RankedAttribute {
  int attribute = 0;
  std::string name;
  double score = 0.0, confidence = 0.0, map_match = 0.0, prior = 0.0;
};

struct ExplanationResult {
  std::string query_id, reference_id;
  SaliencyMap saliency;
  PhiWeights phi;
  std::vector<RankedAttribute> ranked;

  /// Ranked list plus the path the saliency map was written to.
  std::string to_json(const std::string& saliency_path) const;
};

ExplanationResult explain_case(const PairCase& c, const AttributeCatalog& catalog, const Prior& prior,
                               const PhiWeights& phi);
ExplanationResult explain_pair(const Scorer& scorer, const AttributeModel& model,
                               const AttributeCatalog& catalog, const ImageTensor& ref,
                               const ImageTensor& query, const Prior& prior, const PhiWeights& phi,
                               const SaliencyConfig& cfg);

}  // namespace simexplain
