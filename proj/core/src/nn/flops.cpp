#include "apeg/nn/flops.hpp"

#include <algorithm>

#include "apeg/errors.hpp"

namespace apeg::nn {

void FlopModel::validate() const {
  if (steps < 0 || batch < 0 || levels < 0 || res_blocks < 0 || channels < 0 || spatial < 0) {
    throw ConfigError("flop model fields must be non-negative");
  }
}

double flop_estimate(const FlopModel& m, Variant v) {
  m.validate();
  const double scale = m.steps * m.batch * m.levels * m.res_blocks;
  const double c = m.channels;
  const double s = m.spatial;
  if (v == Variant::Ccmdm) return scale * (c * c * s + s * s * c);
  return scale * (2.0 * c * c * s + 4.0 * s * s * c);
}

FlopModel flop_model(const NetConfig& cfg, int rows, int cols, int steps, int batch) {
  FlopModel m;
  m.steps = steps;
  m.batch = batch;
  m.levels = cfg.levels();
  m.res_blocks = cfg.res_blocks;
  m.channels = *std::max_element(cfg.channel_mults.begin(), cfg.channel_mults.end()) *
               static_cast<double>(cfg.base_channels);
  m.spatial = static_cast<double>(rows) * cols;
  return m;
}

}  // namespace apeg::nn
