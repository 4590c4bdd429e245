#include <algorithm>
#include <vector>

#include "perturb.hpp"
#include "simexplain/error.hpp"
#include "simexplain/lasso.hpp"
#include "simexplain/rng.hpp"
#include "simexplain/saliency.hpp"

namespace simexplain {

namespace {
constexpr double kKeepProb = 0.5;
}

SaliencyMap lime(const Scorer& scorer, const ImageTensor& ref, const ImageTensor& query,
                 const SaliencyConfig& cfg) {
  if (!cfg.fixed_reference) throw Unsupported("LIME supports the fixed-reference mode only");
  const auto& lc = cfg.lime;
  const int h = query.height(), w = query.width();
  const Segmentation seg = lc.segmentation == SegmentationKind::Grid
                               ? grid_segments(h, w, lc.n_segments)
                               : slic_segments(query, lc.n_segments);
  const int n = lc.n_samples, p = seg.count;

  std::vector<double> design(static_cast<std::size_t>(n) * p);
  for (int i = 0; i < n; ++i) {
    auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(i));
    for (int j = 0; j < p; ++j)
      design[static_cast<std::size_t>(i) * p + j] = uniform01(rng) < kKeepProb ? 1.0 : 0.0;
  }
  const auto scores = detail::score_perturbations(
      scorer, std::span(&ref, 1), static_cast<std::size_t>(n),
      [&](std::size_t i) {
        Grid keep(h, w);
        for (std::size_t k = 0; k < keep.data.size(); ++k)
          keep.data[k] = design[i * p + static_cast<std::size_t>(seg.labels[k])];
        return blend(query, keep);
      },
      default_exec());

  Grid raw(h, w);
  if (!detail::all_equal(scores)) {
    LassoOptions opts;
    opts.alpha = lc.lasso_alpha * lasso_alpha_max(design, scores, n, p, true);
    opts.max_sweeps = lc.max_sweeps;
    const auto fit = lasso_coordinate_descent(design, scores, n, p, opts);
    for (std::size_t k = 0; k < raw.data.size(); ++k)
      raw.data[k] = std::max(0.0, fit.coef[static_cast<std::size_t>(seg.labels[k])]);
  }
  return make_saliency_map(raw, Method::LIME, true);
}

}  // namespace simexplain
