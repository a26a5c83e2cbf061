#include <benchmark/benchmark.h>

#include "apeg/diffusion.hpp"
#include "apeg/nn/adam.hpp"
#include "apeg/nn/unet.hpp"
#include "apeg/training.hpp"

namespace {

using namespace apeg;

Tensor random_images(int n, int h, int w, Rng& rng) {
  Tensor t(n, 2, h, w);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

nn::Variant variant_arg(const benchmark::State& st) {
  return st.range(0) == 0 ? nn::Variant::Ccmdm : nn::Variant::Cadm;
}

nn::NetConfig desk_net(nn::Variant v) {
  nn::NetConfig c;
  c.cross_attn = v == nn::Variant::Cadm;
  return c;
}

// One optimiser step on a batch of 32 desk-sized pairs. Arg: 0 ccmdm, 1 cadm.
void BM_TrainStep(benchmark::State& st) {
  const nn::Variant v = variant_arg(st);
  Rng rng(10);
  nn::UNet net(desk_net(v), rng);
  nn::Adam opt(*net.params(), {});
  const auto schedule = diffusion::make_schedule(200, 1e-4, 0.02);
  const diffusion::PairData batch{random_images(32, 8, 32, rng), random_images(32, 8, 32, rng)};
  const nn::GemmPrecisionScope scope(nn::GemmPrecision::Single);
  for (auto _ : st) {
    net.params()->zero_grad();
    const auto r = diffusion::batch_loss(v, batch, rng, schedule, net, {});
    opt.step();
    benchmark::DoNotOptimize(r.loss);
  }
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Network evaluation for one reverse step over 100 samples.
void BM_SamplingStep(benchmark::State& st) {
  const nn::Variant v = variant_arg(st);
  Rng rng(11);
  nn::UNet net(desk_net(v), rng);
  const Tensor jack = random_images(100, 8, 32, rng);
  const Tensor x = v == nn::Variant::Ccmdm ? random_images(100, 16, 32, rng) : random_images(100, 8, 32, rng);
  const std::vector<int> steps(100, 100);
  const nn::GemmPrecisionScope scope(nn::GemmPrecision::Single);
  net.begin_sampling(v == nn::Variant::Cadm ? &jack : nullptr);
  for (auto _ : st) {
    const Tensor eps = net.forward(x, steps, v == nn::Variant::Cadm ? &jack : nullptr, false);
    benchmark::DoNotOptimize(eps.data());
  }
  net.end_sampling();
  st.SetItemsProcessed(st.iterations() * 100);
}
BENCHMARK(BM_SamplingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
