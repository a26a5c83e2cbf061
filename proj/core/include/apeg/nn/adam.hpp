#pragma once

#include <vector>

#include "apeg/nn/param_store.hpp"

namespace apeg::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over every block of a store.
class Adam {
 public:
  Adam(ParamStore& ps, AdamOptions opt);

  void step();
  long long steps() const { return t_; }
  AdamOptions& options() { return opt_; }

 private:
  ParamStore* ps_;
  AdamOptions opt_;
  long long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

// One update of a single parameter vector; exposed for tests.
void adam_update(Eigen::VectorXd& w, const Eigen::VectorXd& g, Eigen::VectorXd& m,
                 Eigen::VectorXd& v, long long step, const AdamOptions& opt);

}  // namespace apeg::nn
