#include "apeg/nn/adam.hpp"

#include <cmath>

namespace apeg::nn {

void adam_update(Eigen::VectorXd& w, const Eigen::VectorXd& g, Eigen::VectorXd& m,
                 Eigen::VectorXd& v, long long step, const AdamOptions& opt) {
  m = opt.beta1 * m + (1.0 - opt.beta1) * g;
  v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  w.array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
}

Adam::Adam(ParamStore& ps, AdamOptions opt) : ps_(&ps), opt_(opt) {
  for (int i = 0; i < ps.size(); ++i) {
    m_.push_back(Eigen::VectorXd::Zero(ps.block(i).value.size()));
    v_.push_back(Eigen::VectorXd::Zero(ps.block(i).value.size()));
  }
}

void Adam::step() {
  ++t_;
  for (int i = 0; i < ps_->size(); ++i) {
    auto& b = ps_->block(i);
    adam_update(b.value, b.grad, m_[static_cast<std::size_t>(i)], v_[static_cast<std::size_t>(i)],
                t_, opt_);
  }
}

}  // namespace apeg::nn
