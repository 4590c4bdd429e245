#include <vector>

#include "perturb.hpp"
#include "simexplain/error.hpp"
#include "simexplain/kernels.hpp"
#include "simexplain/saliency.hpp"

namespace simexplain {

SaliencyMap sliding_window(const Scorer& scorer, std::span<const ImageTensor> refs,
                           const ImageTensor& query, const SaliencyConfig& cfg) {
  const int h = query.height(), w = query.width();
  const auto windows =
      window_lattice(h, w, cfg.sliding.windows_query, cfg.sliding.window_area_frac);
  const ImageTensor* q = &query;
  const double full = mean_scores(scorer, refs, std::span(q, 1))[0];
  const auto scores = detail::score_perturbations(
      scorer, refs, windows.size(),
      [&](std::size_t i) { return detail::occlude(query, windows[i].y, windows[i].x, windows[i].side); },
      default_exec());

  Grid raw(h, w);
  if (!detail::all_equal(scores)) {
    const auto cov = kernels::occlusion_coverage(windows, scores, h, w, default_exec());
    for (std::size_t k = 0; k < raw.data.size(); ++k)
      if (cov.count.data[k] > 0) raw.data[k] = full - cov.score_sum.data[k] / cov.count.data[k];
  }
  return make_saliency_map(raw, Method::SlidingWindow, cfg.fixed_reference);
}

SaliencyMap sliding_window(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                           const SaliencyConfig& cfg) {
  if (cfg.fixed_reference) return sliding_window(scorer, std::span(&ref, 1), query, cfg);
  const auto refs = reference_variants(ref, cfg);
  return sliding_window(scorer, refs, query, cfg);
}

}  // namespace simexplain
