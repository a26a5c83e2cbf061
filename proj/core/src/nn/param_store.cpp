#include "apeg/nn/param_store.hpp"

#include "apeg/errors.hpp"

namespace apeg::nn {

int ParamStore::add(const std::string& name, const std::vector<int>& dims) {
  if (dims.empty()) throw ShapeError("parameter " + name + " has no dimensions");
  if (find(name) >= 0) throw ShapeError("duplicate parameter name " + name);
  Eigen::Index n = 1;
  for (int d : dims) {
    if (d < 1) throw ShapeError("parameter " + name + " has a non-positive dimension");
    n *= d;
  }
  ParamBlock b{name, dims, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  blocks_.push_back(std::move(b));
  return size() - 1;
}

int ParamStore::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (blocks_[static_cast<std::size_t>(i)].name == name) return i;
  }
  return -1;
}

MatMap ParamStore::value(int id) {
  ParamBlock& b = block(id);
  return {b.value.data(), b.rows(), b.cols()};
}

MatMap ParamStore::grad(int id) {
  ParamBlock& b = block(id);
  return {b.grad.data(), b.rows(), b.cols()};
}

std::size_t ParamStore::total() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& b : blocks_) b.grad.setZero();
}

Eigen::VectorXd ParamStore::flat_values() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(total()));
  Eigen::Index off = 0;
  for (const auto& b : blocks_) {
    v.segment(off, b.value.size()) = b.value;
    off += b.value.size();
  }
  return v;
}

Eigen::VectorXd ParamStore::flat_grads() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(total()));
  Eigen::Index off = 0;
  for (const auto& b : blocks_) {
    v.segment(off, b.grad.size()) = b.grad;
    off += b.grad.size();
  }
  return v;
}

void ParamStore::set_flat_values(const Eigen::VectorXd& v) {
  if (v.size() != static_cast<Eigen::Index>(total())) throw ShapeError("flat parameter size mismatch");
  Eigen::Index off = 0;
  for (auto& b : blocks_) {
    b.value = v.segment(off, b.value.size());
    off += b.value.size();
  }
}

void ParamStore::round_to_float() {
  for (auto& b : blocks_) {
    for (Eigen::Index i = 0; i < b.value.size(); ++i) {
      b.value[i] = static_cast<double>(static_cast<float>(b.value[i]));
    }
  }
}

}  // namespace apeg::nn
