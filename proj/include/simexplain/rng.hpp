#pragma once

#include <cstdint>
#include <random>

namespace simexplain {

using Rng = std::mt19937_64;

// Independent stream per (seed, index); lets parallel loops draw the same
// numbers no matter which thread handles an index.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5a4eu};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace simexplain
