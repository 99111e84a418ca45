#include "common.hpp"

#include "papp/channel.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace papp;

void BM_WmmseSolve(benchmark::State& state) {
  Rng rng(1);
  const auto h = bench::rayleigh(rng, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const double sigma2 = noise_for_snr(20.0, 1.0);
  long long iterations = 0;
  for (auto _ : state) {
    const WmmseResult r = wmmse_solve(h, sigma2, 1.0);
    iterations += r.state.iterations;
    benchmark::DoNotOptimize(r.w.data());
  }
  state.counters["iters"] = benchmark::Counter(static_cast<double>(iterations), benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_WmmseSolve)->Args({16, 2})->Args({64, 4})->Unit(benchmark::kMicrosecond);

void BM_WmmseIteration(benchmark::State& state) {
  Rng rng(2);
  const auto h = bench::rayleigh(rng, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const double sigma2 = noise_for_snr(20.0, 1.0);
  const PrecodingMatrix w = mrt_precoder(h, 1.0);
  for (auto _ : state) {
    const auto uv = wmmse_update_uv(h, w, sigma2);
    const auto next = wmmse_w_step(h, uv.u, uv.v, sigma2, 1.0);
    benchmark::DoNotOptimize(next.w.data());
  }
}
BENCHMARK(BM_WmmseIteration)->Args({16, 2})->Args({64, 4})->Unit(benchmark::kMicrosecond);

void BM_ZeroForcing(benchmark::State& state) {
  Rng rng(3);
  const auto h = bench::rayleigh(rng, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    const PrecodingMatrix w = zf_precoder(h, 1.0);
    benchmark::DoNotOptimize(w.data());
  }
}
BENCHMARK(BM_ZeroForcing)->Args({16, 2})->Args({64, 4})->Unit(benchmark::kMicrosecond);

void BM_SumRate(benchmark::State& state) {
  Rng rng(4);
  const auto h = bench::rayleigh(rng, 64, 4);
  const PrecodingMatrix w = zf_precoder(h, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sum_rate(h, w, 0.01));
}
BENCHMARK(BM_SumRate);

void BM_SiteDataset(benchmark::State& state) {
  const SiteProfile profile = default_site_profiles().front();
  for (auto _ : state) {
    const Dataset d = generate_site_dataset(profile, static_cast<std::size_t>(state.range(0)), {64, 4, 1.0});
    benchmark::DoNotOptimize(d.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SiteDataset)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
