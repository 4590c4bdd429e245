#include "simexplain/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "simexplain/error.hpp"
#include "simexplain/parallel.hpp"

namespace simexplain {

void PhiWeights::validate() const {
  for (double v : {phi1, phi2, phi3})
    if (!std::isfinite(v)) throw InvalidArgument("phi weights must be finite");
  if (phi1 == 0 && phi2 == 0 && phi3 == 0) throw InvalidArgument("phi weights must not all be zero");
}

std::vector<double> map_match_scores(const Grid& match, const AttrPrediction& pred) {
  std::vector<double> out(pred.maps.size(), 0.0);
  const bool flat = std::all_of(match.data.begin(), match.data.end(),
                                [&](double v) { return v == match.data.front(); });
  if (flat) return out;
  for (std::size_t a = 0; a < pred.maps.size(); ++a) {
    const auto& n = pred.maps[a];
    if (n.rows != match.rows || n.cols != match.cols)
      throw InvalidArgument("map match: activation map resolution differs from the saliency map");
    out[a] = cosine(match.data, normalize_map(n).grid.data);
  }
  return out;
}

PairCase make_case(const Scorer& scorer, const AttributeModel& model, const ImageTensor& ref,
                   const ImageTensor& query, const SaliencyConfig& cfg) {
  return make_case(model, query, generate(scorer, ref, query, cfg));
}

PairCase make_case(const AttributeModel& model, const ImageTensor& query, SaliencyMap saliency) {
  PairCase c;
  c.saliency = std::move(saliency);
  c.match = to_match_resolution(c.saliency.to_grid());
  const auto pred = model.forward(query);
  c.confidence = pred.confidences;
  c.map_match = map_match_scores(c.match, pred);
  return c;
}

std::vector<PairCase> build_cases(const Scorer& scorer, const AttributeModel& model,
                                  const Dataset& ds, std::span<const ImagePair> pairs,
                                  const SaliencyConfig& cfg) {
  std::vector<SaliencyMap> maps;
  maps.reserve(pairs.size());
  for (const auto& p : pairs) maps.push_back(generate(scorer, ds.image(p.reference_id), ds.image(p.query_id), cfg));
  return build_cases(model, ds, pairs, maps);
}

std::vector<PairCase> build_cases(const AttributeModel& model, const Dataset& ds,
                                  std::span<const ImagePair> pairs, std::span<const SaliencyMap> maps) {
  if (maps.size() != pairs.size()) throw InvalidArgument("build_cases: one saliency map per pair");
  std::vector<PairCase> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    out[i] = make_case(model, ds.image(p.query_id), maps[i]);
    out[i].query_id = p.query_id;
    out[i].reference_id = p.reference_id;
    out[i].gt = ds.label_row(p.query_id);
  }
  return out;
}

Prior prior_from_counts(std::span<const std::size_t> counts) {
  if (counts.empty()) throw InvalidArgument("prior: no attributes");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0) + static_cast<double>(counts.size());
  Prior p;
  for (auto c : counts) p.p.push_back((static_cast<double>(c) + 1.0) / total);
  return p;
}

PriorResult estimate_prior(std::span<const PairCase> cases, int n_attributes) {
  if (n_attributes < 1) throw InvalidArgument("prior: no attributes");
  PriorResult r;
  r.counts.assign(n_attributes, 0);
  for (const auto& c : cases) {
    int best = -1;
    for (int a = 0; a < n_attributes; ++a) {
      if (!c.gt.at(a)) continue;
      if (best < 0 || c.map_match[a] > c.map_match[best]) best = a;
    }
    if (best < 0) {
      ++r.skipped;
      continue;
    }
    ++r.counts[best];
  }
  r.prior = prior_from_counts(r.counts);
  return r;
}

PriorResult estimate_prior(const AttributeModel& model, const Scorer& scorer, const Dataset& ds,
                           std::span<const ImagePair> pairs, const SaliencyConfig& cfg) {
  if (pairs.empty()) throw InvalidArgument("prior: no validation pairs");
  const auto cases = build_cases(scorer, model, ds, pairs, cfg);
  return estimate_prior(cases, model.n_attributes);
}

std::vector<double> explanation_scores(std::span<const double> confidence,
                                       std::span<const double> map_match, const Prior& prior,
                                       const PhiWeights& phi) {
  if (confidence.size() != map_match.size() || confidence.size() != prior.p.size())
    throw InvalidArgument("explanation_scores: attribute counts differ");
  std::vector<double> e(confidence.size());
  for (std::size_t i = 0; i < e.size(); ++i)
    e[i] = phi.phi1 * confidence[i] + phi.phi2 * map_match[i] + phi.phi3 * prior.p[i];
  return e;
}

std::vector<double> explanation_scores(const PairCase& c, const Prior& prior, const PhiWeights& phi) {
  return explanation_scores(c.confidence, c.map_match, prior, phi);
}

std::vector<int> rank_attributes(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

double ranking_accuracy(std::span<const PairCase> cases, const Prior& prior, const PhiWeights& phi) {
  if (cases.empty()) throw InvalidArgument("ranking_accuracy: no cases");
  std::size_t hits = 0;
  for (const auto& c : cases) {
    const auto e = explanation_scores(c, prior, phi);
    const auto best = std::max_element(e.begin(), e.end()) - e.begin();
    hits += c.gt.at(static_cast<std::size_t>(best)) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

PhiFit fit_phi(std::span<const PairCase> cases, const Prior& prior, double step) {
  if (!(step > 0 && step <= 1)) throw InvalidArgument("fit_phi: step must be in (0, 1]");
  if (cases.empty()) throw InvalidArgument("fit_phi: no validation cases");
  const int n = static_cast<int>(std::llround(1.0 / step));
  std::vector<double> axis;
  for (int i = 0; i <= n; ++i) axis.push_back(std::min(1.0, i * step));
  if (axis.back() < 1.0) axis.push_back(1.0);
  const double third[] = {0.0, 0.05, 0.1};

  std::vector<PhiWeights> grid;
  for (double p1 : axis)
    for (double p2 : axis)
      for (double p3 : third)
        if (p1 != 0 || p2 != 0 || p3 != 0) grid.push_back({p1, p2, p3});
  std::vector<double> acc(grid.size());
  for_each_chunk(grid.size(), 16, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) acc[i] = ranking_accuracy(cases, prior, grid[i]);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (acc[i] > acc[best] || (acc[i] == acc[best] && grid[i].phi2 > grid[best].phi2)) best = i;
  return {grid[best], acc[best]};
}

ExplanationResult explain_case(const PairCase& c, const AttributeCatalog& catalog, const Prior& prior,
                               const PhiWeights& phi) {
  phi.validate();
  const auto e = explanation_scores(c, prior, phi);
  ExplanationResult r{c.query_id, c.reference_id, c.saliency, phi, {}};
  for (int a : rank_attributes(e))
    r.ranked.push_back({a, catalog.name(a), e[a], c.confidence[a], c.map_match[a], prior.p[a]});
  return r;
}

ExplanationResult explain_pair(const Scorer& scorer, const AttributeModel& model,
                               const AttributeCatalog& catalog, const ImageTensor& ref,
                               const ImageTensor& query, const Prior& prior, const PhiWeights& phi,
                               const SaliencyConfig& cfg) {
  return explain_case(make_case(scorer, model, ref, query, cfg), catalog, prior, phi);
}

std::string ExplanationResult::to_json(const std::string& saliency_path) const {
  nlohmann::ordered_json j;
  j["format"] = "simexplain-explanation";
  j["version"] = 1;
  j["query"] = query_id;
  j["reference"] = reference_id;
  j["saliency"] = {{"path", saliency_path},
                   {"method", std::string(method_name(saliency.method))},
                   {"fixed_reference", saliency.fixed_reference},
                   {"degenerate", saliency.degenerate()}};
  j["phi"] = {phi.phi1, phi.phi2, phi.phi3};
  auto list = nlohmann::ordered_json::array();
  for (const auto& r : ranked)
    list.push_back({{"attribute", r.attribute}, {"name", r.name}, {"score", r.score},
                    {"confidence", r.confidence}, {"map_match", r.map_match}, {"prior", r.prior}});
  j["ranked"] = list;
  return j.dump(2) + "\n";
}

}  // namespace simexplain
