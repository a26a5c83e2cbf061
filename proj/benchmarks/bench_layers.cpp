#include <benchmark/benchmark.h>

#include "apeg/nn/attention.hpp"
#include "apeg/nn/layers.hpp"

namespace {

using namespace apeg;
using namespace apeg::nn;

Act random_act(int c, Shape s, Rng& rng) {
  Act a{Mat(c, s.cols()), s};
  for (Eigen::Index i = 0; i < a.x.size(); ++i) a.x(i) = rng.normal();
  return a;
}

GemmPrecision precision_arg(const benchmark::State& st) {
  return st.range(1) != 0 ? GemmPrecision::Single : GemmPrecision::Double;
}

// Args: channels, single precision flag. Desk-sized batch of 32 images 16x32.
void BM_ConvForward(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  Rng rng(1);
  ParamStore ps;
  Conv2d conv(ps, "conv", c, c, 3, 1, rng);
  const Act x = random_act(c, {32, 16, 32}, rng);
  const GemmPrecisionScope scope(precision_arg(st));
  for (auto _ : st) benchmark::DoNotOptimize(conv.forward(x).x.data());
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_ConvForward)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  Rng rng(2);
  ParamStore ps;
  Conv2d conv(ps, "conv", c, c, 3, 1, rng);
  const Act x = random_act(c, {32, 16, 32}, rng);
  const GemmPrecisionScope scope(precision_arg(st));
  const Act y = conv.forward(x);
  const Act dy = random_act(c, y.s, rng);
  for (auto _ : st) benchmark::DoNotOptimize(conv.backward(dy).x.data());
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_ConvBackward)->ArgsProduct({{16, 32}, {0, 1}})->Unit(benchmark::kMillisecond);

// Args: channels, tokens per image.
void BM_SelfAttention(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  const int tokens = static_cast<int>(st.range(1));
  Rng rng(3);
  ParamStore ps;
  AttentionBlock block(ps, "attn", c, c, 4, false, rng);
  const Act x = random_act(c, {32, 1, tokens}, rng);
  for (auto _ : st) benchmark::DoNotOptimize(block.forward(x, nullptr).x.data());
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_SelfAttention)->ArgsProduct({{32}, {32, 128}})->Unit(benchmark::kMillisecond);

}  // namespace
