#pragma once

#include <span>
#include <vector>

#include "simexplain/tensor.hpp"

namespace simexplain {

struct ScorerCaps {
  bool can_score = true;
  bool can_embed = false;
  bool can_grad = false;
  int max_batch = 1;
};

struct Embedding {
  std::vector<double> data;
  int dim() const { return static_cast<int>(data.size()); }
};

/// Norm guard: |v| is taken as sqrt(|v|^2 + eps^2) so blank images score 0
/// instead of dividing by zero.
inline constexpr double kNormEps = 1e-12;

double cosine(std::span<const double> a, std::span<const double> b);

/// The similarity model under explanation. Implementations are reentrant.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual ScorerCaps caps() const = 0;
  virtual ImageShape input_shape() const = 0;

  /// score(ref, q_i) for every query, order preserved.
  virtual std::vector<double> score_batch(const ImageTensor& ref,
                                          std::span<const ImageTensor> queries) const = 0;

  double score(const ImageTensor& ref, const ImageTensor& query) const;

  /// Throws Unsupported unless caps().can_embed.
  virtual Embedding embed(const ImageTensor& image) const;

  /// d score(ref, query) / d query, laid out like the image. Throws
  /// Unsupported unless caps().can_grad.
  virtual std::vector<double> grad_query(const ImageTensor& ref, const ImageTensor& query) const;

 protected:
  /// Throws InvalidArgument when the image does not match input_shape().
  void check_shape(const ImageTensor& img) const;
};

}  // namespace simexplain
