#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apeg/nn/unet.hpp"

namespace apeg::nn {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Denominator floor of the relative error, so that entries whose true
  // gradient is essentially zero are judged on absolute error.
  double floor = 1e-6;
  double param_scale = 0.2;  // std of the randomised parameters
  bool sabotage = false;  // drop one backward term (negative control)
  std::uint64_t seed = 7;
  int batch = 2;
  int rows = 2;  // Alice image height; the CCMDM pair is twice this
  int cols = 4;
};

struct BlockReport {
  std::string name;
  Eigen::Index worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  Variant variant = Variant::Ccmdm;
  std::size_t params = 0;
  double max_rel_err = 0;
  bool pass = false;
  std::vector<BlockReport> blocks;
};

// A network with a few thousand parameters that still has every layer type.
NetConfig tiny_net_config(Variant v);

// Central differences against the analytic gradient of the variant's loss
// (masked for CCMDM, conditional for CADM) on randomised parameters.
GradCheckReport grad_check(Variant v, const GradCheckOptions& opt = {});

}  // namespace apeg::nn
