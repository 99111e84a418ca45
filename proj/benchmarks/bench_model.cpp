#include "common.hpp"

#include "papp/channel.hpp"
#include "papp/mldg.hpp"
#include "papp/model.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace papp;

ModelConfig desk_model() {
  ModelConfig mc;
  mc.n_tx = 16;
  mc.n_users = 2;
  mc.teacher_hidden = {128, 128};
  return mc;
}

Batch random_batch(std::size_t n, const ModelConfig& mc) {
  Rng rng(5);
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.h.push_back(bench::rayleigh(rng, mc.n_tx, mc.n_users));
    b.r_wmmse.push_back(sum_rate(b.h.back(), wmmse_solve(b.h.back(), noise_for_snr(20.0, 1.0), 1.0).w,
                                 noise_for_snr(20.0, 1.0)));
  }
  return b;
}

void BM_StudentInference(benchmark::State& state) {
  const ModelConfig mc = desk_model();
  const PappModel model = PappModel::init(mc, 1);
  const Batch b = random_batch(static_cast<std::size_t>(state.range(0)), mc);
  for (auto _ : state) benchmark::DoNotOptimize(student_precoders(model, b.h));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StudentInference)->Arg(1)->Arg(64)->Unit(benchmark::kMicrosecond);

// Forward and backward of both losses for one batch, as in one domain's
// share of a training step.
void BM_PhaseGradients(benchmark::State& state) {
  TrainConfig tc;
  tc.model = desk_model();
  const PappModel model = PappModel::init(tc.model, 1);
  const std::vector<Batch> batches{random_batch(static_cast<std::size_t>(state.range(0)), tc.model)};
  const std::vector<std::uint64_t> seeds{7};
  for (auto _ : state) benchmark::DoNotOptimize(phase_gradients(model, batches, seeds, tc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PhaseGradients)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
