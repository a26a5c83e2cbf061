#include "apeg/training.hpp"

#include <algorithm>
#include <numeric>

#include "apeg/errors.hpp"
#include "apeg/nn/adam.hpp"

namespace apeg::diffusion {

PairData PairData::slice(int begin, int count) const {
  return {alice.slice(begin, count), jack.slice(begin, count)};
}

namespace {

PairData gather(const PairData& d, const std::vector<int>& idx, std::size_t begin, std::size_t end) {
  std::vector<Tensor> a, j;
  for (std::size_t i = begin; i < end; ++i) {
    a.push_back(d.alice.sample(idx[i]));
    j.push_back(d.jack.sample(idx[i]));
  }
  return {Tensor::stack(a), Tensor::stack(j)};
}

}  // namespace

LossResult batch_loss(nn::Variant v, const PairData& batch, Rng& rng, const NoiseSchedule& s,
                      nn::NoisePredictor& net, LossOptions opt) {
  if (v == nn::Variant::Cadm) return loss_conditional(batch.alice, batch.jack, rng, s, net, opt);
  const fp::Mask mask = fp::build_mask(batch.alice.h(), batch.alice.w());
  return loss_masked(fp::concat_rows(batch.jack, batch.alice), mask, rng, s, net, opt);
}

std::vector<double> train_model(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s,
                                const PairData& data, const TrainOptions& opt) {
  if (data.size() < 1) throw DataError("no training pairs");
  if (opt.epochs < 0 || opt.batch < 1) throw ConfigError("epochs must be >= 0 and batch >= 1");
  nn::ParamStore* ps = net.params();
  if (ps == nullptr) throw ConfigError("predictor has no trainable parameters");
  nn::Adam adam(*ps, {opt.lr, 0.9, 0.999, 1e-8});
  const nn::GemmPrecisionScope precision(opt.precision);
  const Rng root(opt.seed);

  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::vector<double> losses;
  int step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle = root.fork("shuffle", static_cast<std::uint64_t>(epoch));
    Rng noise = root.fork("noise", static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      const PairData batch = gather(data, order, start, end);
      ps->zero_grad();
      const LossResult r = batch_loss(v, batch, noise, s, net, {true, true});
      adam.step();
      if (opt.on_batch) opt.on_batch(step, r.loss);
      ++step;
      total += r.loss * static_cast<double>(end - start);
    }
    losses.push_back(total / static_cast<double>(order.size()));
    if (opt.on_epoch) opt.on_epoch(epoch, losses.back());
  }
  return losses;
}

double validation_loss(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s,
                       const PairData& data, std::uint64_t seed, int batch) {
  if (data.size() < 1) throw DataError("no validation pairs");
  Rng rng = Rng(seed).fork("validation");
  double total = 0.0;
  for (int start = 0; start < data.size(); start += batch) {
    const int count = std::min(batch, data.size() - start);
    const LossResult r = batch_loss(v, data.slice(start, count), rng, s, net, {false, false});
    total += r.loss * count;
  }
  return total / data.size();
}

Tensor generate(nn::Variant v, nn::NoisePredictor& net, const NoiseSchedule& s, const Tensor& jack,
                Rng& rng, NoiseScaling scaling, int chunk) {
  if (chunk < 1) throw ConfigError("sampling chunk must be >= 1");
  std::vector<Tensor> parts;
  for (int start = 0; start < jack.n(); start += chunk) {
    const Tensor j = jack.slice(start, std::min(chunk, jack.n() - start));
    parts.push_back(v == nn::Variant::Cadm ? sample_cadm(j, s, net, rng, scaling)
                                           : sample_ccmdm(j, s, net, rng, scaling));
  }
  return Tensor::stack(parts);
}

std::vector<double> moving_average(const std::vector<double>& xs, int window) {
  if (window < 1) throw ConfigError("moving-average window must be >= 1");
  std::vector<double> out(xs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    if (i >= static_cast<std::size_t>(window)) sum -= xs[i - static_cast<std::size_t>(window)];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

int settle_index(const std::vector<double>& xs, double frac) {
  if (xs.empty()) throw ConfigError("empty series");
  const double target = (1.0 + frac) * xs.back();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] <= target) return static_cast<int>(i);
  }
  return static_cast<int>(xs.size()) - 1;
}

}  // namespace apeg::diffusion
