#include <benchmark/benchmark.h>

#include <random>

#include "capri/stats/nonparametric.hpp"

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_Wilcoxon(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n, 1), b = noise(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(capri::stats::wilcoxon_signed_rank(a, b));
}
BENCHMARK(BM_Wilcoxon)->Arg(5)->Arg(20)->Arg(1000);

void BM_Friedman(benchmark::State& state) {
  capri::stats::ScoreMatrix m;
  m.treatments = {"a", "b", "c", "d", "e", "f"};
  for (int i = 0; i < state.range(0); ++i) m.rows.push_back(noise(6, i));
  for (auto _ : state) benchmark::DoNotOptimize(capri::stats::friedman_test(m));
}
BENCHMARK(BM_Friedman)->Arg(10)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
