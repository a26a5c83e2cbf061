#include "apeg/diffusion.hpp"

#include <cmath>
#include <string>

#include "apeg/errors.hpp"

namespace apeg::diffusion {

namespace {

void check_mask(const Tensor& x, const fp::Mask& m) {
  if (m.n() != 1 || m.c() != x.c() || m.h() != x.h() || m.w() != x.w()) {
    throw ShapeError("mask " + m.shape_str() + " does not fit " + x.shape_str());
  }
}

bool any_nonzero(const Tensor* z) {
  if (z == nullptr) return false;
  for (double v : z->values()) {
    if (v != 0.0) return true;
  }
  return false;
}

std::vector<int> uniform_steps(int n, int t) { return std::vector<int>(static_cast<std::size_t>(n), t); }

// Reverse update of one entry.
struct StepCoeffs {
  double inv_sqrt_alpha, eps_coef, noise_coef;
};

StepCoeffs step_coeffs(int t, const NoiseSchedule& s, NoiseScaling scaling) {
  const double bt = s.beta_tilde_at(t);
  return {1.0 / std::sqrt(s.alpha_at(t)), s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t)),
          scaling == NoiseScaling::Sqrt ? std::sqrt(bt) : bt};
}

}  // namespace

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps) {
    throw ShapeError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
  }
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("beta range must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps);
  s.beta.resize(n);
  s.alpha.resize(n);
  s.alpha_bar.resize(n);
  s.beta_tilde.resize(n);
  double prev = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = prev * s.alpha[i];
    s.beta_tilde[i] = (1.0 - prev) / (1.0 - s.alpha_bar[i]) * s.beta[i];
    prev = s.alpha_bar[i];
  }
  return s;
}

Tensor gaussian(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor gaussian_like(const Tensor& shape, Rng& rng) {
  return gaussian(shape.n(), shape.c(), shape.h(), shape.w(), rng);
}

Tensor forward_sample(const Tensor& h0, const std::vector<int>& steps, const Tensor& noise,
                      const NoiseSchedule& s) {
  require_same_shape(h0, noise, "forward_sample");
  if (static_cast<int>(steps.size()) != h0.n()) throw ShapeError("one step per sample required");
  Tensor out(h0.n(), h0.c(), h0.h(), h0.w());
  const std::size_t per = h0.sample_size();
  for (int b = 0; b < h0.n(); ++b) {
    const int t = steps[static_cast<std::size_t>(b)];
    s.check_step(t);
    const double a = std::sqrt(s.alpha_bar_at(t));
    const double sig = std::sqrt(1.0 - s.alpha_bar_at(t));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = a * h0[i] + sig * noise[i];
  }
  return out;
}

Tensor forward_sample(const Tensor& h0, int t, const Tensor& noise, const NoiseSchedule& s) {
  return forward_sample(h0, uniform_steps(h0.n(), t), noise, s);
}

Tensor forward_sample_masked(const Tensor& pair0, const fp::Mask& mask,
                             const std::vector<int>& steps, const Tensor& noise,
                             const NoiseSchedule& s) {
  require_same_shape(pair0, noise, "forward_sample_masked");
  check_mask(pair0, mask);
  if (static_cast<int>(steps.size()) != pair0.n()) throw ShapeError("one step per sample required");
  Tensor out = pair0;
  const std::size_t per = pair0.sample_size();
  for (int b = 0; b < pair0.n(); ++b) {
    const int t = steps[static_cast<std::size_t>(b)];
    s.check_step(t);
    const double a = std::sqrt(s.alpha_bar_at(t));
    const double sig = std::sqrt(1.0 - s.alpha_bar_at(t));
    for (std::size_t k = 0; k < per; ++k) {
      const double m = mask[k];
      if (m == 0.0) continue;
      const std::size_t i = b * per + k;
      out[i] = (1.0 - (1.0 - a) * m) * pair0[i] + m * sig * noise[i];
    }
  }
  return out;
}

Tensor forward_sample_masked(const Tensor& pair0, const fp::Mask& mask, int t, const Tensor& noise,
                             const NoiseSchedule& s) {
  return forward_sample_masked(pair0, mask, uniform_steps(pair0.n(), t), noise, s);
}

Tensor forward_step(const Tensor& prev, int t, const Tensor& noise, const NoiseSchedule& s) {
  require_same_shape(prev, noise, "forward_step");
  s.check_step(t);
  const double a = std::sqrt(s.alpha_at(t));
  const double sig = std::sqrt(s.beta_at(t));
  Tensor out(prev.n(), prev.c(), prev.h(), prev.w());
  for (std::size_t i = 0; i < prev.size(); ++i) out[i] = a * prev[i] + sig * noise[i];
  return out;
}

PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s) {
  s.check_step(t);
  const double abar = s.alpha_bar_at(t);
  const double abar_prev = s.alpha_bar_prev(t);
  return {std::sqrt(abar_prev) * s.beta_at(t) / (1.0 - abar),
          std::sqrt(s.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar), s.beta_tilde_at(t)};
}

Posterior posterior_params(const Tensor& h0, const Tensor& ht, int t, const NoiseSchedule& s) {
  require_same_shape(h0, ht, "posterior_params");
  const PosteriorCoefficients c = posterior_coefficients(t, s);
  Posterior p{Tensor(h0.n(), h0.c(), h0.h(), h0.w()), c.variance};
  for (std::size_t i = 0; i < h0.size(); ++i) p.mean[i] = c.c0 * h0[i] + c.ct * ht[i];
  return p;
}

Tensor reverse_step_conditional(const Tensor& ht, int t, const Tensor& eps, const Tensor* z,
                                const NoiseSchedule& s, NoiseScaling scaling) {
  require_same_shape(ht, eps, "reverse_step (prediction)");
  if (z != nullptr) require_same_shape(ht, *z, "reverse_step (noise)");
  s.check_step(t);
  if (t == 1 && any_nonzero(z)) throw ShapeError("reverse step at t = 1 must not add noise");
  const StepCoeffs k = step_coeffs(t, s, scaling);
  Tensor out(ht.n(), ht.c(), ht.h(), ht.w());
  for (std::size_t i = 0; i < ht.size(); ++i) {
    out[i] = k.inv_sqrt_alpha * (ht[i] - k.eps_coef * eps[i]);
    if (z != nullptr) out[i] += k.noise_coef * (*z)[i];
  }
  return out;
}

Tensor reverse_step_masked(const Tensor& pair_t, const fp::Mask& mask, int t, const Tensor& eps,
                           const Tensor* z, const NoiseSchedule& s, NoiseScaling scaling) {
  require_same_shape(pair_t, eps, "reverse_step_masked (prediction)");
  if (z != nullptr) require_same_shape(pair_t, *z, "reverse_step_masked (noise)");
  check_mask(pair_t, mask);
  s.check_step(t);
  if (t == 1 && any_nonzero(z)) throw ShapeError("reverse step at t = 1 must not add noise");
  const StepCoeffs k = step_coeffs(t, s, scaling);
  Tensor out = pair_t;
  const std::size_t per = pair_t.sample_size();
  for (std::size_t i = 0; i < pair_t.size(); ++i) {
    const double m = mask[i % per];
    if (m == 0.0) continue;
    double v = k.inv_sqrt_alpha * (pair_t[i] - k.eps_coef * eps[i]);
    if (z != nullptr) v += k.noise_coef * (*z)[i];
    out[i] = m * v + (1.0 - m) * pair_t[i];
  }
  return out;
}

double masked_mse(const Tensor& pred, const Tensor& target, const fp::Mask& mask) {
  require_same_shape(pred, target, "masked_mse");
  check_mask(pred, mask);
  const std::size_t per = pred.sample_size();
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t k = 0; k < per; ++k) count += mask[k];
  if (count == 0.0) throw ShapeError("mask selects no entries");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = mask[i % per] * (target[i] - pred[i]);
    sum += r * r;
  }
  return sum / (count * pred.n());
}

double mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  return (pred.vec() - target.vec()).squaredNorm() / static_cast<double>(pred.size());
}

namespace {

std::vector<int> draw_steps_and_noise(const Tensor& x, Rng& rng, const NoiseSchedule& s,
                                      Tensor& noise) {
  std::vector<int> steps(static_cast<std::size_t>(x.n()));
  noise = Tensor(x.n(), x.c(), x.h(), x.w());
  const std::size_t per = x.sample_size();
  for (int b = 0; b < x.n(); ++b) {
    steps[static_cast<std::size_t>(b)] = rng.uniform_int(1, s.steps);
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) noise[i] = rng.normal();
  }
  return steps;
}

}  // namespace

LossResult loss_masked(const Tensor& pair0, const fp::Mask& mask, Rng& rng, const NoiseSchedule& s,
                       nn::NoisePredictor& net, LossOptions opt) {
  check_mask(pair0, mask);
  LossResult r;
  r.steps = draw_steps_and_noise(pair0, rng, s, r.noise);
  r.input = forward_sample_masked(pair0, mask, r.steps, r.noise, s);
  net.observe_noise(r.noise);
  r.prediction = net.forward(r.input, r.steps, nullptr, opt.train);
  r.loss = masked_mse(r.prediction, r.noise, mask);
  if (opt.backward) {
    const std::size_t per = pair0.sample_size();
    double count = 0.0;
    for (std::size_t k = 0; k < per; ++k) count += mask[k];
    const double scale = 2.0 / (count * pair0.n());
    Tensor grad(pair0.n(), pair0.c(), pair0.h(), pair0.w());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double m = mask[i % per];
      grad[i] = scale * m * m * (r.prediction[i] - r.noise[i]);
    }
    net.backward(grad);
  }
  return r;
}

LossResult loss_conditional(const Tensor& h0, const Tensor& cond, Rng& rng, const NoiseSchedule& s,
                            nn::NoisePredictor& net, LossOptions opt) {
  require_same_shape(h0, cond, "loss_conditional");
  LossResult r;
  r.steps = draw_steps_and_noise(h0, rng, s, r.noise);
  r.input = forward_sample(h0, r.steps, r.noise, s);
  net.observe_noise(r.noise);
  r.prediction = net.forward(r.input, r.steps, &cond, opt.train);
  r.loss = mse(r.prediction, r.noise);
  if (opt.backward) {
    const double scale = 2.0 / static_cast<double>(h0.size());
    Tensor grad(h0.n(), h0.c(), h0.h(), h0.w());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = scale * (r.prediction[i] - r.noise[i]);
    net.backward(grad);
  }
  return r;
}

Tensor sample_ccmdm(const Tensor& jack, const NoiseSchedule& s, nn::NoisePredictor& net, Rng& rng,
                    NoiseScaling scaling) {
  const fp::Mask mask = fp::build_mask(jack.h(), jack.w());
  Tensor x = fp::concat_rows(jack, gaussian_like(jack, rng));
  net.begin_sampling(nullptr);
  for (int t = s.steps; t >= 1; --t) {
    const Tensor eps = net.forward(x, uniform_steps(x.n(), t), nullptr, false);
    if (t > 1) {
      const Tensor z = gaussian_like(x, rng);
      x = reverse_step_masked(x, mask, t, eps, &z, s, scaling);
    } else {
      x = reverse_step_masked(x, mask, t, eps, nullptr, s, scaling);
    }
  }
  net.end_sampling();
  return fp::bottom_rows(x);
}

Tensor sample_cadm(const Tensor& jack, const NoiseSchedule& s, nn::NoisePredictor& net, Rng& rng,
                   NoiseScaling scaling) {
  Tensor x = gaussian_like(jack, rng);
  net.begin_sampling(&jack);
  for (int t = s.steps; t >= 1; --t) {
    const Tensor eps = net.forward(x, uniform_steps(x.n(), t), &jack, false);
    if (t > 1) {
      const Tensor z = gaussian_like(x, rng);
      x = reverse_step_conditional(x, t, eps, &z, s, scaling);
    } else {
      x = reverse_step_conditional(x, t, eps, nullptr, s, scaling);
    }
  }
  net.end_sampling();
  return x;
}

}  // namespace apeg::diffusion
