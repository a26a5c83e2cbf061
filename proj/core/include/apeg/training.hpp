#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "apeg/diffusion.hpp"
#include "apeg/nn/unet.hpp"

namespace apeg::diffusion {

// Normalised images, (N, 2, M, K) each, sample i of both forming a pair.
struct PairData {
  Tensor alice;
  Tensor jack;

  int size() const { return alice.n(); }
  PairData slice(int begin, int count) const;
};

struct TrainOptions {
  int epochs = 30;
  int batch = 32;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  nn::GemmPrecision precision = nn::GemmPrecision::Single;
  // Called after each epoch with (epoch index, mean training loss).
  std::function<void(int, double)> on_epoch;
  // Called after each optimiser step with (step index, batch loss).
  std::function<void(int, double)> on_batch;
};

// Mean loss of one batch for either variant, with optional backward pass.
LossResult batch_loss(nn::Variant v, const PairData& batch, Rng& rng, const NoiseSchedule& s,
                      nn::NoisePredictor& net, LossOptions opt);

// Adam training; returns per-epoch mean losses.
std::vector<double> train_model(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s,
                                const PairData& data, const TrainOptions& opt);

// Deterministic held-out loss (fixed steps and noise from `seed`).
double validation_loss(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s,
                       const PairData& data, std::uint64_t seed, int batch);

// Generated Alice images for every Jack image, sampled in chunks.
Tensor generate(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s, const Tensor& jack,
                Rng& rng, NoiseScaling scaling, int chunk);

// Trailing moving average; the first window-1 entries average what exists.
std::vector<double> moving_average(const std::vector<double>& xs, int window);

// First index whose value is within `frac` of the last value, i.e.
// xs[i] <= (1 + frac) * xs.back(). Returns xs.size() - 1 at worst.
int settle_index(const std::vector<double>& xs, double frac);

}  // namespace apeg::diffusion
