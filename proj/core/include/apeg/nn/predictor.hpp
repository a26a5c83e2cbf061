#pragma once

#include <vector>

#include "apeg/nn/param_store.hpp"
#include "apeg/tensor.hpp"

namespace apeg::nn {

// Anything that predicts the injected noise from a noisy input, its step
// indices (1-based) and an optional condition image.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual Tensor forward(const Tensor& x, const std::vector<int>& steps, const Tensor* cond,
                         bool train) = 0;
  // Accumulates parameter gradients for the last forward call.
  virtual void backward(const Tensor& grad_out) = 0;
  virtual ParamStore* params() { return nullptr; }

  // Called by the losses with the noise they are about to ask for. Only the
  // oracle predictor uses it.
  virtual void observe_noise(const Tensor& /*noise*/) {}

  // Lets a predictor reuse condition-dependent work across a sampling run.
  virtual void begin_sampling(const Tensor* /*cond*/) {}
  virtual void end_sampling() {}
};

// Returns exactly the noise the loss drew. Used for the zero-loss self-test.
class OracleNoisePredictor : public NoisePredictor {
 public:
  Tensor forward(const Tensor& x, const std::vector<int>&, const Tensor*, bool) override {
    return noise_.same_shape(x) ? noise_ : Tensor(x.n(), x.c(), x.h(), x.w());
  }
  void backward(const Tensor&) override {}
  void observe_noise(const Tensor& noise) override { noise_ = noise; }

 private:
  Tensor noise_;
};

}  // namespace apeg::nn
