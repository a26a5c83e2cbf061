#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace apeg {

// Dense (N, C, H, W) array of doubles in row-major order. Single images use
// N = 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Eigen::Map<Eigen::VectorXd> vec() {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_str() const;

  // Copy of sample i as an (1, C, H, W) tensor.
  Tensor sample(int i) const;
  void set_sample(int i, const Tensor& s);
  // Samples [begin, begin + count) of this tensor.
  Tensor slice(int begin, int count) const;
  static Tensor stack(const std::vector<Tensor>& items);

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + h) * w_ + w;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

// Throws ShapeError naming `what` when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace apeg
