#pragma once

#include <string>
#include <vector>

#include "apeg/nn/param_store.hpp"
#include "apeg/rng.hpp"
#include "apeg/tensor.hpp"

namespace apeg::nn {

struct Shape {
  int b = 0, h = 0, w = 0;
  int hw() const { return h * w; }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(b) * h * w; }
  bool operator==(const Shape&) const = default;
};

// Activation in channel-major layout: one row per channel, one column per
// (sample, y, x) position. Column index = (b * H + y) * W + x.
struct Act {
  Mat x;
  Shape s;
  int c() const { return static_cast<int>(x.rows()); }
};

Act from_tensor(const Tensor& t);
Tensor to_tensor(const Act& a);

// Largest group count <= 4 that divides `channels`.
int group_count(int channels);

enum class Init { FanIn, Zero };

// Arithmetic used by the convolution GEMMs. Parameters, gradients and all
// other layers stay in double; Single only narrows the conv products.
enum class GemmPrecision { Double, Single };

GemmPrecision gemm_precision();

// Sets the convolution precision for the current thread until destroyed.
class GemmPrecisionScope {
 public:
  explicit GemmPrecisionScope(GemmPrecision p);
  ~GemmPrecisionScope();
  GemmPrecisionScope(const GemmPrecisionScope&) = delete;
  GemmPrecisionScope& operator=(const GemmPrecisionScope&) = delete;

 private:
  GemmPrecision prev_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int kernel,
         int stride, Rng& rng, Init init = Init::FanIn);

  Act forward(const Act& in);
  Act backward(const Act& dout);

  int cin() const { return cin_; }
  int cout() const { return cout_; }
  int weight_id() const { return w_; }
  int bias_id() const { return b_; }

 private:
  ParamStore* ps_ = nullptr;
  int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1;
  int w_ = -1, b_ = -1;
  Shape in_s_, out_s_;
  bool single_ = false;  // precision used by the last forward
  Mat col_;  // (k*k*cin, B*Ho*Wo); rows ordered (ky, kx, cin)
  Mat dcol_;
  Eigen::MatrixXf colf_, dcolf_;
};

// Affine map applied to every column of a (in, N) matrix.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
         Init init = Init::FanIn);

  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);

  int weight_id() const { return w_; }
  int bias_id() const { return b_; }

 private:
  ParamStore* ps_ = nullptr;
  int w_ = -1, b_ = -1;
  Mat x_;
};

class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParamStore& ps, const std::string& name, int channels);

  Act forward(const Act& in);
  Act backward(const Act& dout);

 private:
  ParamStore* ps_ = nullptr;
  int c_ = 0, groups_ = 1;
  int g_ = -1, b_ = -1;
  Mat xhat_;
  Eigen::VectorXd inv_std_;  // per (sample, group)
  Shape s_;
};

// Elementwise x * sigmoid(x); caches its input.
class SiLU {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;

 private:
  Mat x_;
  Mat sig_;
};

class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {}
  // `rng` may be null when not training.
  Mat forward(const Mat& x, bool train, Rng* rng);
  Mat backward(const Mat& dy) const;

 private:
  double p_ = 0.0;
  bool active_ = false;
  Mat keep_;
};

// Nearest-neighbour 2x upsampling.
Act upsample2x(const Act& in);
Act upsample2x_backward(const Act& dout, const Shape& in_shape);

Act concat_channels(const Act& a, const Act& b);

// Sinusoidal features of the step followed by Linear -> SiLU -> Linear.
// Output is (embed_dim, B).
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  TimeEmbedding(ParamStore& ps, const std::string& name, int base, int embed_dim, Rng& rng);

  static Mat sinusoid(const std::vector<int>& steps, int width);

  Mat forward(const std::vector<int>& steps);
  void backward(const Mat& de);

 private:
  int base_ = 0;
  Linear l1_, l2_;
  SiLU act_;
};

// GN -> SiLU -> conv -> (+ time projection) -> GN -> SiLU -> dropout -> conv,
// plus an identity or 1x1 skip. embed_dim = 0 builds a block without a time
// input.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParamStore& ps, const std::string& name, int cin, int cout, int embed_dim,
           double dropout, Rng& rng);

  Act forward(const Act& x, const Mat* emb, bool train, Rng* rng);
  // Adds the embedding gradient into `demb` when the block has a time input.
  Act backward(const Act& dout, Mat* demb);

 private:
  bool has_time_ = false, has_skip_ = false;
  GroupNorm n1_, n2_;
  SiLU a1_, a2_, at_;
  Conv2d c1_, c2_, skip_;
  Linear t_;
  Dropout drop_;
};

}  // namespace apeg::nn

namespace apeg::nn::detail {
// Negative control for the gradient checker: drops the projection term of the
// group-norm input gradient.
void set_groupnorm_sabotage(bool on);
}  // namespace apeg::nn::detail
