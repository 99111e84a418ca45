#include "papp/complexity.hpp"

#include <benchmark/benchmark.h>

#include <sstream>

namespace {

using namespace papp;

void BM_ComplexityReport(benchmark::State& state) {
  const ComplexityParams params;
  for (auto _ : state) {
    std::ostringstream out;
    complexity_report(params).write_csv(out);
    benchmark::DoNotOptimize(out.str().size());
  }
}
BENCHMARK(BM_ComplexityReport);

}  // namespace

BENCHMARK_MAIN();
