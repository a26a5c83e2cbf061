#include "apeg/tensor.hpp"

#include <algorithm>

#include "apeg/errors.hpp"

namespace apeg {

Tensor::Tensor(int n, int c, int h, int w, double fill)
    : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(n_) + ", " + std::to_string(c_) + ", " +
         std::to_string(h_) + ", " + std::to_string(w_) + ")";
}

Tensor Tensor::sample(int i) const { return slice(i, 1); }

Tensor Tensor::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_) throw ShapeError("sample index out of range");
  Tensor out(count, c_, h_, w_);
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin * sample_size());
  std::copy(first, first + static_cast<std::ptrdiff_t>(count * sample_size()), out.data_.begin());
  return out;
}

void Tensor::set_sample(int i, const Tensor& s) {
  if (i < 0 || i >= n_) throw ShapeError("sample index out of range");
  if (s.n_ != 1 || s.c_ != c_ || s.h_ != h_ || s.w_ != w_) {
    throw ShapeError("set_sample: got " + s.shape_str() + " for " + shape_str());
  }
  std::copy(s.data_.begin(), s.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(i * sample_size()));
}

Tensor Tensor::stack(const std::vector<Tensor>& items) {
  if (items.empty()) return {};
  const Tensor& f = items.front();
  int total = 0;
  for (const Tensor& t : items) {
    if (t.c_ != f.c_ || t.h_ != f.h_ || t.w_ != f.w_) throw ShapeError("stack: shape mismatch");
    total += t.n_;
  }
  Tensor out(total, f.c_, f.h_, f.w_);
  auto it = out.data_.begin();
  for (const Tensor& t : items) it = std::copy(t.data_.begin(), t.data_.end(), it);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace apeg
