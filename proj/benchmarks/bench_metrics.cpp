#include <benchmark/benchmark.h>

#include "apeg/auth.hpp"
#include "apeg/rng.hpp"

namespace {

using namespace apeg;

Tensor random_image(Rng& rng) {
  Tensor t(1, 2, 8, 32);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

// Arg: metric kind index.
void BM_Dissimilarity(benchmark::State& st) {
  const auto kind = auth::kAllMetrics[static_cast<std::size_t>(st.range(0))];
  Rng rng(20);
  const Tensor a = random_image(rng), b = random_image(rng);
  for (auto _ : st) benchmark::DoNotOptimize(auth::dissimilarity(kind, a, b));
  st.SetLabel(auth::metric_name(kind));
}
BENCHMARK(BM_Dissimilarity)->DenseRange(0, 4);

// Rank decision over a stream of the given length.
void BM_DecideRank(benchmark::State& st) {
  Rng rng(21);
  std::vector<double> d(static_cast<std::size_t>(st.range(0)));
  for (double& x : d) x = rng.uniform();
  for (auto _ : st) benchmark::DoNotOptimize(auth::decide_rank(d, 0.5).size());
}
BENCHMARK(BM_DecideRank)->Arg(200)->Arg(1200);

}  // namespace
