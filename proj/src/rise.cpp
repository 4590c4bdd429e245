#include <numeric>
#include <vector>

#include "perturb.hpp"
#include "simexplain/kernels.hpp"
#include "simexplain/saliency.hpp"

namespace simexplain {

SaliencyMap rise(const Scorer& scorer, std::span<const ImageTensor> refs, const ImageTensor& query,
                 const SaliencyConfig& cfg) {
  const auto& rc = cfg.rise;
  const int h = query.height(), w = query.width();
  const MaskSet masks(rc.n_masks, rc.grid, rc.keep_prob, h, w, cfg.seed);
  auto mask_at = [&](std::size_t i, Grid& out) { masks.upsampled(i, out); };
  const auto scores = detail::score_perturbations(
      scorer, refs, masks.size(), [&](std::size_t i) { return blend(query, masks.upsampled(i)); },
      default_exec());

  Grid raw(h, w);
  if (!detail::all_equal(scores)) {
    // Scores are centered before weighting. The uncentered sum adds
    // mean(score) * sum(masks), a field that carries mask-sampling noise only.
    const double mean =
        std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    std::vector<double> weights(scores.size());
    const double scale = 1.0 / (static_cast<double>(masks.size()) * rc.keep_prob);
    for (std::size_t i = 0; i < scores.size(); ++i) weights[i] = (scores[i] - mean) * scale;
    raw = kernels::weighted_mask_sum(weights, h, w, mask_at, default_exec());
  }
  return make_saliency_map(raw, Method::RISE, cfg.fixed_reference);
}

SaliencyMap rise(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                 const SaliencyConfig& cfg) {
  if (cfg.fixed_reference) return rise(scorer, std::span(&ref, 1), query, cfg);
  const auto refs = reference_variants(ref, cfg);
  return rise(scorer, refs, query, cfg);
}

}  // namespace simexplain
