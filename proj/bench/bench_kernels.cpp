// Serial reference vs OpenMP path for the perturbation hot loops.
//   bench_kernels [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "simexplain/kernels.hpp"
#include "simexplain/rng.hpp"

using namespace simexplain;

namespace {

const ImageShape kShape{56, 56, 3};

std::vector<ImageTensor> images(int n) {
  auto rng = make_rng(1);
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> d(kShape.size());
    for (auto& v : d) v = uniform01(rng);
    out.emplace_back(kShape, std::move(d));
  }
  return out;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_LinearEmbedBatch(benchmark::State& st) {
  const auto imgs = images(256);
  const auto w = noise(8 * kShape.size(), 2);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::linear_embed_batch(w, 8, imgs, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(imgs.size()));
}

void BM_ReluPoolBatch(benchmark::State& st) {
  const auto imgs = images(256);
  const auto proj = noise(32 * 3, 3), bias = noise(32, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::relu_pool_batch(proj, bias, 3, imgs, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(imgs.size()));
}

void BM_CosineRows(benchmark::State& st) {
  const auto ref = noise(32, 5), rows = noise(32 * 20000, 6);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::cosine_rows(ref, rows, 32, exec_of(st)));
}

void BM_WeightedMaskSum(benchmark::State& st) {
  const int n = 2000;
  std::vector<Grid> masks;
  auto rng = make_rng(7);
  for (int i = 0; i < n; ++i) {
    Grid g(56, 56);
    for (auto& v : g.data) v = uniform01(rng);
    masks.push_back(std::move(g));
  }
  const auto w = noise(n, 8);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::weighted_mask_sum(w, masks, exec_of(st)));
}

void BM_OcclusionCoverage(benchmark::State& st) {
  std::vector<kernels::Window> win;
  for (int y = 0; y < 25; ++y)
    for (int x = 0; x < 25; ++x) win.push_back({y * 37 / 24, x * 37 / 24, 19});
  const auto scores = noise(win.size(), 9);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::occlusion_coverage(win, scores, 56, 56, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_LinearEmbedBatch)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReluPoolBatch)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CosineRows)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeightedMaskSum)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OcclusionCoverage)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
