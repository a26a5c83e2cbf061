#pragma once

#include <vector>

#include "apeg/fingerprint.hpp"
#include "apeg/nn/predictor.hpp"
#include "apeg/rng.hpp"
#include "apeg/tensor.hpp"

namespace apeg::diffusion {

// Steps are 1-based throughout: t = 1 is the least noisy step.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta, alpha, alpha_bar, beta_tilde;  // index t - 1

  double beta_at(int t) const { return beta[idx(t)]; }
  double alpha_at(int t) const { return alpha[idx(t)]; }
  double alpha_bar_at(int t) const { return alpha_bar[idx(t)]; }
  double beta_tilde_at(int t) const { return beta_tilde[idx(t)]; }
  // alpha_bar_{t-1} with alpha_bar_0 = 1.
  double alpha_bar_prev(int t) const { return t == 1 ? 1.0 : alpha_bar[idx(t - 1)]; }
  void check_step(int t) const;

 private:
  std::size_t idx(int t) const { return static_cast<std::size_t>(t - 1); }
};

// Linear betas from beta_start to beta_end (T = 1 uses beta_start).
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

// Additive reverse noise: sqrt(beta~_t) z (posterior-consistent) or the
// literal beta~_t z.
enum class NoiseScaling { Sqrt, Literal };

Tensor gaussian_like(const Tensor& shape, Rng& rng);
Tensor gaussian(int n, int c, int h, int w, Rng& rng);

// h_t = sqrt(abar_t) h0 + sqrt(1 - abar_t) noise. `steps` holds one step per
// sample.
Tensor forward_sample(const Tensor& h0, int t, const Tensor& noise, const NoiseSchedule& s);
Tensor forward_sample(const Tensor& h0, const std::vector<int>& steps, const Tensor& noise,
                      const NoiseSchedule& s);

// Corrupts only the entries where the mask is 1; other entries are copied.
// The mask is (1, C, H, W) and broadcasts over the batch.
Tensor forward_sample_masked(const Tensor& pair0, const fp::Mask& mask, int t,
                             const Tensor& noise, const NoiseSchedule& s);
Tensor forward_sample_masked(const Tensor& pair0, const fp::Mask& mask,
                             const std::vector<int>& steps, const Tensor& noise,
                             const NoiseSchedule& s);

// One Markov step h_t = sqrt(alpha_t) h_{t-1} + sqrt(beta_t) noise.
Tensor forward_step(const Tensor& prev, int t, const Tensor& noise, const NoiseSchedule& s);

struct PosteriorCoefficients {
  double c0 = 0;        // multiplies h0
  double ct = 0;        // multiplies h_t
  double variance = 0;  // beta~_t
};
PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s);

struct Posterior {
  Tensor mean;
  double variance = 0;
};
Posterior posterior_params(const Tensor& h0, const Tensor& ht, int t, const NoiseSchedule& s);

// z may be null (zero). A nonzero z at t = 1 is rejected.
Tensor reverse_step_conditional(const Tensor& ht, int t, const Tensor& eps, const Tensor* z,
                                const NoiseSchedule& s, NoiseScaling scaling = NoiseScaling::Sqrt);
// Updates mask-1 entries only; mask-0 entries are copied bit for bit.
Tensor reverse_step_masked(const Tensor& pair_t, const fp::Mask& mask, int t, const Tensor& eps,
                           const Tensor* z, const NoiseSchedule& s,
                           NoiseScaling scaling = NoiseScaling::Sqrt);

// Mean of squared residuals over masked entries of every sample.
double masked_mse(const Tensor& pred, const Tensor& target, const fp::Mask& mask);
double mse(const Tensor& pred, const Tensor& target);

struct LossResult {
  double loss = 0;
  std::vector<int> steps;
  Tensor noise;
  Tensor input;
  Tensor prediction;
};

struct LossOptions {
  bool backward = true;  // accumulate parameter gradients
  bool train = true;     // training-mode forward (dropout)
};

// Per sample: t ~ U{1..T}, noise ~ N(0, I); predicts the noise of the masked
// pair and scores it on the Alice block only.
LossResult loss_masked(const Tensor& pair0, const fp::Mask& mask, Rng& rng,
                       const NoiseSchedule& s, nn::NoisePredictor& net, LossOptions opt = {});
// Same with Alice's image alone and Jack's image as the condition.
LossResult loss_conditional(const Tensor& h0, const Tensor& cond, Rng& rng,
                            const NoiseSchedule& s, nn::NoisePredictor& net, LossOptions opt = {});

// Alice images (N, 2, M, K) generated from Jack images (N, 2, M, K).
Tensor sample_ccmdm(const Tensor& jack, const NoiseSchedule& s, nn::NoisePredictor& net, Rng& rng,
                    NoiseScaling scaling = NoiseScaling::Sqrt);
Tensor sample_cadm(const Tensor& jack, const NoiseSchedule& s, nn::NoisePredictor& net, Rng& rng,
                   NoiseScaling scaling = NoiseScaling::Sqrt);

}  // namespace apeg::diffusion
