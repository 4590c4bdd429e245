#pragma once

// Helpers shared by the perturbation methods; not part of the public API.

#include <functional>
#include <span>
#include <vector>

#include "simexplain/parallel.hpp"
#include "simexplain/scorer.hpp"

namespace simexplain::detail {

/// Scores n perturbed queries built by make(i), chunk by chunk, against the
/// reference variants (mean over them).
std::vector<double> score_perturbations(const Scorer& scorer, std::span<const ImageTensor> refs,
                                        std::size_t n,
                                        const std::function<ImageTensor(std::size_t)>& make,
                                        Exec exec);

bool all_equal(std::span<const double> v);

/// Copy of img with a square zeroed.
ImageTensor occlude(const ImageTensor& img, int y, int x, int side);

}  // namespace simexplain::detail
