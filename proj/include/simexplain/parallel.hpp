#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace simexplain {

/// Serial is the reference path kept for testing; Parallel runs the same
/// per-chunk work under OpenMP. Results are combined in chunk-index order, so
/// both produce identical bits.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);
/// Caps OpenMP threads; n <= 0 means all available cores. Returns the value set.
int set_threads(int n);

inline constexpr std::size_t kChunk = 64;

inline std::size_t num_chunks(std::size_t n, std::size_t chunk = kChunk) {
  return (n + chunk - 1) / chunk;
}

/// Calls fn(chunk_index, begin, end) for every chunk of [0, n). Exceptions
/// thrown inside a parallel region are captured and the first rethrown.
template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, Exec exec, Fn&& fn) {
  const std::size_t nchunks = num_chunks(n, chunk);
  auto run = [&](std::size_t c) {
    const std::size_t b = c * chunk;
    const std::size_t e = b + chunk < n ? b + chunk : n;
    fn(c, b, e);
  };
  if (exec == Exec::Serial || nchunks <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) run(c);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 1)
  for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
    try {
      run(static_cast<std::size_t>(c));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace simexplain
