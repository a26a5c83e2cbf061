#include "apeg/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "apeg/errors.hpp"

namespace apeg::nn {

namespace {

constexpr double kNormEps = 1e-5;
bool g_sabotage_groupnorm = false;

void fill_fan_in(ParamStore& ps, int id, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  auto& v = ps.block(id).value;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
}


}  // namespace

void detail::set_groupnorm_sabotage(bool on) { g_sabotage_groupnorm = on; }

Act from_tensor(const Tensor& t) {
  Act a;
  a.s = {t.n(), t.h(), t.w()};
  a.x.resize(t.c(), a.s.cols());
  const int hw = a.s.hw();
  for (int b = 0; b < t.n(); ++b) {
    for (int c = 0; c < t.c(); ++c) {
      const double* src = t.data() + (static_cast<std::size_t>(b) * t.c() + c) * hw;
      for (int p = 0; p < hw; ++p) a.x(c, static_cast<Eigen::Index>(b) * hw + p) = src[p];
    }
  }
  return a;
}

Tensor to_tensor(const Act& a) {
  Tensor t(a.s.b, a.c(), a.s.h, a.s.w);
  const int hw = a.s.hw();
  for (int b = 0; b < a.s.b; ++b) {
    for (int c = 0; c < a.c(); ++c) {
      double* dst = t.data() + (static_cast<std::size_t>(b) * a.c() + c) * hw;
      for (int p = 0; p < hw; ++p) dst[p] = a.x(c, static_cast<Eigen::Index>(b) * hw + p);
    }
  }
  return t;
}

int group_count(int channels) {
  for (int g = 4; g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int kernel,
               int stride, Rng& rng, Init init)
    : ps_(&ps), cin_(cin), cout_(cout), k_(kernel), stride_(stride) {
  if (kernel != 1 && kernel != 3) throw ShapeError("only 1x1 and 3x3 convolutions are supported");
  if (stride != 1 && stride != 2) throw ShapeError("stride must be 1 or 2");
  w_ = ps.add(name + ".weight", {cout, kernel, kernel, cin});
  b_ = ps.add(name + ".bias", {cout});
  if (init == Init::FanIn) {
    fill_fan_in(ps, w_, cin * kernel * kernel, rng);
    fill_fan_in(ps, b_, cin * kernel * kernel, rng);
  }
}

namespace {

thread_local GemmPrecision g_precision = GemmPrecision::Double;

// Gathers 3x3 (or strided) patches; rows ordered (ky, kx, cin).
template <class Dst>
void im2col(const Mat& in, const Shape& in_s, const Shape& out_s, int k, int stride,
            int cin, Dst& col) {
  using T = typename Dst::Scalar;
  const int pad = k / 2;
  const Eigen::Index rows = static_cast<Eigen::Index>(k) * k * cin;
  col.setZero(rows, out_s.cols());
  for (int b = 0; b < out_s.b; ++b) {
    for (int oy = 0; oy < out_s.h; ++oy) {
      for (int ox = 0; ox < out_s.w; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(b) * out_s.h + oy) * out_s.w + ox;
        T* dst = col.data() + j * rows;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= in_s.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= in_s.w) continue;
            const Eigen::Index src = (static_cast<Eigen::Index>(b) * in_s.h + iy) * in_s.w + ix;
            const double* s = in.data() + src * cin;
            T* d = dst + (ky * k + kx) * cin;
            for (int c = 0; c < cin; ++c) d[c] = static_cast<T>(s[c]);
          }
        }
      }
    }
  }
}

template <class Src>
void col2im(const Src& dcol, const Shape& in_s, const Shape& out_s, int k, int stride,
            int cin, Mat& din) {
  using T = typename Src::Scalar;
  const int pad = k / 2;
  const Eigen::Index rows = dcol.rows();
  din.setZero(cin, in_s.cols());
  for (int b = 0; b < out_s.b; ++b) {
    for (int oy = 0; oy < out_s.h; ++oy) {
      for (int ox = 0; ox < out_s.w; ++ox) {
        const Eigen::Index j = (static_cast<Eigen::Index>(b) * out_s.h + oy) * out_s.w + ox;
        const T* src = dcol.data() + j * rows;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= in_s.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= in_s.w) continue;
            const Eigen::Index dst = (static_cast<Eigen::Index>(b) * in_s.h + iy) * in_s.w + ix;
            double* d = din.data() + dst * cin;
            const T* s = src + (ky * k + kx) * cin;
            for (int c = 0; c < cin; ++c) d[c] += static_cast<double>(s[c]);
          }
        }
      }
    }
  }
}

}  // namespace

GemmPrecision gemm_precision() { return g_precision; }

GemmPrecisionScope::GemmPrecisionScope(GemmPrecision p) : prev_(g_precision) {
  g_precision = p;
}

GemmPrecisionScope::~GemmPrecisionScope() { g_precision = prev_; }

Act Conv2d::forward(const Act& in) {
  if (in.c() != cin_) throw ShapeError("conv input has " + std::to_string(in.c()) + " channels");
  const int pad = k_ / 2;
  in_s_ = in.s;
  out_s_ = {in.s.b, (in.s.h + 2 * pad - k_) / stride_ + 1, (in.s.w + 2 * pad - k_) / stride_ + 1};
  const auto W = ps_->value(w_);
  const auto bias = ps_->value(b_);
  const bool pointwise = k_ == 1 && stride_ == 1;
  single_ = g_precision == GemmPrecision::Single;
  Act out;
  out.s = out_s_;

  if (single_) {
    if (pointwise) {
      colf_ = in.x.cast<float>();
    } else {
      im2col(in.x, in_s_, out_s_, k_, stride_, cin_, colf_);
    }
    out.x = (W.cast<float>() * colf_).cast<double>();
  } else {
    if (pointwise) {
      col_ = in.x;
    } else {
      im2col(in.x, in_s_, out_s_, k_, stride_, cin_, col_);
    }
    out.x.noalias() = W * col_;
  }
  out.x.colwise() += bias.col(0);
  return out;
}

Act Conv2d::backward(const Act& dout) {
  auto W = ps_->value(w_);
  auto dW = ps_->grad(w_);
  auto db = ps_->grad(b_);
  db.col(0) += dout.x.rowwise().sum();
  const bool pointwise = k_ == 1 && stride_ == 1;

  Act din;
  din.s = in_s_;
  if (single_) {
    const Eigen::MatrixXf g = dout.x.cast<float>();
    dW += (g * colf_.transpose()).cast<double>();
    dcolf_.noalias() = W.cast<float>().transpose() * g;
    if (pointwise) {
      din.x = dcolf_.cast<double>();
    } else {
      col2im(dcolf_, in_s_, out_s_, k_, stride_, cin_, din.x);
    }
    return din;
  }
  dW.noalias() += dout.x * col_.transpose();
  if (pointwise) {
    din.x.noalias() = W.transpose() * dout.x;
    return din;
  }
  dcol_.noalias() = W.transpose() * dout.x;
  col2im(dcol_, in_s_, out_s_, k_, stride_, cin_, din.x);
  return din;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, Init init)
    : ps_(&ps) {
  w_ = ps.add(name + ".weight", {out, in});
  b_ = ps.add(name + ".bias", {out});
  if (init == Init::FanIn) {
    fill_fan_in(ps, w_, in, rng);
    fill_fan_in(ps, b_, in, rng);
  }
}

Mat Linear::forward(const Mat& x) {
  x_ = x;
  Mat y = ps_->value(w_) * x;
  y.colwise() += ps_->value(b_).col(0);
  return y;
}

Mat Linear::backward(const Mat& dy) {
  ps_->grad(w_).noalias() += dy * x_.transpose();
  ps_->grad(b_).col(0) += dy.rowwise().sum();
  return ps_->value(w_).transpose() * dy;
}

// ---------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(ParamStore& ps, const std::string& name, int channels)
    : ps_(&ps), c_(channels), groups_(group_count(channels)) {
  g_ = ps.add(name + ".gamma", {channels});
  b_ = ps.add(name + ".beta", {channels});
  ps.block(g_).value.setOnes();
}

Act GroupNorm::forward(const Act& in) {
  if (in.c() != c_) throw ShapeError("group norm channel mismatch");
  s_ = in.s;
  const int cg = c_ / groups_;
  const int hw = s_.hw();
  const double count = static_cast<double>(cg) * hw;
  xhat_.resize(c_, s_.cols());
  inv_std_.resize(static_cast<Eigen::Index>(s_.b) * groups_);
  for (int b = 0; b < s_.b; ++b) {
    for (int g = 0; g < groups_; ++g) {
      const auto blk = in.x.block(g * cg, static_cast<Eigen::Index>(b) * hw, cg, hw);
      const double mean = blk.sum() / count;
      const double var = (blk.array() - mean).square().sum() / count;
      const double inv = 1.0 / std::sqrt(var + kNormEps);
      inv_std_[b * groups_ + g] = inv;
      xhat_.block(g * cg, static_cast<Eigen::Index>(b) * hw, cg, hw) = (blk.array() - mean) * inv;
    }
  }
  const auto gamma = ps_->value(g_).col(0);
  const auto beta = ps_->value(b_).col(0);
  Act out;
  out.s = s_;
  out.x = (xhat_.array().colwise() * gamma.array()).colwise() + beta.array();
  return out;
}

Act GroupNorm::backward(const Act& dout) {
  const int cg = c_ / groups_;
  const int hw = s_.hw();
  const double count = static_cast<double>(cg) * hw;
  ps_->grad(g_).col(0) += (dout.x.array() * xhat_.array()).rowwise().sum().matrix();
  ps_->grad(b_).col(0) += dout.x.rowwise().sum();
  const auto gamma = ps_->value(g_).col(0);
  const Mat dxhat = dout.x.array().colwise() * gamma.array();
  Act din;
  din.s = s_;
  din.x.resize(c_, s_.cols());
  for (int b = 0; b < s_.b; ++b) {
    for (int g = 0; g < groups_; ++g) {
      const Eigen::Index col0 = static_cast<Eigen::Index>(b) * hw;
      const auto dx = dxhat.block(g * cg, col0, cg, hw);
      const auto xh = xhat_.block(g * cg, col0, cg, hw);
      const double mean_d = dx.sum() / count;
      const double mean_dx = g_sabotage_groupnorm ? 0.0 : (dx.array() * xh.array()).sum() / count;
      din.x.block(g * cg, col0, cg, hw) =
          inv_std_[b * groups_ + g] * (dx.array() - mean_d - xh.array() * mean_dx);
    }
  }
  return din;
}

// ---------------------------------------------------------------- activations

Mat SiLU::forward(const Mat& x) {
  x_ = x;
  sig_.resize(x.rows(), x.cols());
  sig_.array() = ((-x.array()).exp() + 1.0).inverse();
  return (x.array() * sig_.array()).matrix();
}

Mat SiLU::backward(const Mat& dy) const {
  return (dy.array() * sig_.array() * (1.0 + x_.array() * (1.0 - sig_.array()))).matrix();
}

Mat Dropout::forward(const Mat& x, bool train, Rng* rng) {
  active_ = train && p_ > 0.0;
  if (!active_) return x;
  if (rng == nullptr) throw ConfigError("dropout in training mode needs an rng");
  keep_.resize(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - p_);
  for (Eigen::Index i = 0; i < keep_.size(); ++i) {
    keep_.data()[i] = rng->uniform() < p_ ? 0.0 : scale;
  }
  return x.cwiseProduct(keep_);
}

Mat Dropout::backward(const Mat& dy) const { return active_ ? dy.cwiseProduct(keep_) : dy; }

Act upsample2x(const Act& in) {
  Act out;
  out.s = {in.s.b, in.s.h * 2, in.s.w * 2};
  out.x.resize(in.c(), out.s.cols());
  for (int b = 0; b < out.s.b; ++b) {
    for (int y = 0; y < out.s.h; ++y) {
      for (int x = 0; x < out.s.w; ++x) {
        const Eigen::Index dst = (static_cast<Eigen::Index>(b) * out.s.h + y) * out.s.w + x;
        const Eigen::Index src = (static_cast<Eigen::Index>(b) * in.s.h + y / 2) * in.s.w + x / 2;
        out.x.col(dst) = in.x.col(src);
      }
    }
  }
  return out;
}

Act upsample2x_backward(const Act& dout, const Shape& in_shape) {
  Act din;
  din.s = in_shape;
  din.x.setZero(dout.c(), in_shape.cols());
  for (int b = 0; b < dout.s.b; ++b) {
    for (int y = 0; y < dout.s.h; ++y) {
      for (int x = 0; x < dout.s.w; ++x) {
        const Eigen::Index src = (static_cast<Eigen::Index>(b) * dout.s.h + y) * dout.s.w + x;
        const Eigen::Index dst = (static_cast<Eigen::Index>(b) * in_shape.h + y / 2) * in_shape.w + x / 2;
        din.x.col(dst) += dout.x.col(src);
      }
    }
  }
  return din;
}

Act concat_channels(const Act& a, const Act& b) {
  if (!(a.s == b.s)) throw ShapeError("concat_channels: spatial shapes differ");
  Act out;
  out.s = a.s;
  out.x.resize(a.c() + b.c(), a.s.cols());
  out.x.topRows(a.c()) = a.x;
  out.x.bottomRows(b.c()) = b.x;
  return out;
}

// ---------------------------------------------------------------- TimeEmbedding

TimeEmbedding::TimeEmbedding(ParamStore& ps, const std::string& name, int base, int embed_dim,
                             Rng& rng)
    : base_(base),
      l1_(ps, name + ".fc1", base, embed_dim, rng),
      l2_(ps, name + ".fc2", embed_dim, embed_dim, rng) {
  if (base < 2 || base % 2 != 0) throw ConfigError("time embedding width must be even");
}

Mat TimeEmbedding::sinusoid(const std::vector<int>& steps, int width) {
  const int half = width / 2;
  Mat f(width, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t b = 0; b < steps.size(); ++b) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double a = steps[b] * freq;
      f(i, static_cast<Eigen::Index>(b)) = std::sin(a);
      f(half + i, static_cast<Eigen::Index>(b)) = std::cos(a);
    }
  }
  return f;
}

Mat TimeEmbedding::forward(const std::vector<int>& steps) {
  return l2_.forward(act_.forward(l1_.forward(sinusoid(steps, base_))));
}

void TimeEmbedding::backward(const Mat& de) { l1_.backward(act_.backward(l2_.backward(de))); }

// ---------------------------------------------------------------- ResBlock

ResBlock::ResBlock(ParamStore& ps, const std::string& name, int cin, int cout, int embed_dim,
                   double dropout, Rng& rng)
    : has_time_(embed_dim > 0), has_skip_(cin != cout), drop_(dropout) {
  n1_ = GroupNorm(ps, name + ".norm1", cin);
  c1_ = Conv2d(ps, name + ".conv1", cin, cout, 3, 1, rng);
  if (has_time_) t_ = Linear(ps, name + ".time", embed_dim, cout, rng);
  n2_ = GroupNorm(ps, name + ".norm2", cout);
  c2_ = Conv2d(ps, name + ".conv2", cout, cout, 3, 1, rng);
  if (has_skip_) skip_ = Conv2d(ps, name + ".skip", cin, cout, 1, 1, rng);
}

Act ResBlock::forward(const Act& x, const Mat* emb, bool train, Rng* rng) {
  Act h = n1_.forward(x);
  h.x = a1_.forward(h.x);
  h = c1_.forward(h);
  if (has_time_) {
    if (emb == nullptr) throw ShapeError("residual block expects a time embedding");
    const Mat tp = t_.forward(at_.forward(*emb));
    const int hw = h.s.hw();
    for (int b = 0; b < h.s.b; ++b) {
      h.x.middleCols(static_cast<Eigen::Index>(b) * hw, hw).colwise() += tp.col(b);
    }
  }
  h = n2_.forward(h);
  h.x = drop_.forward(a2_.forward(h.x), train, rng);
  h = c2_.forward(h);
  if (has_skip_) {
    h.x += skip_.forward(x).x;
  } else {
    h.x += x.x;
  }
  return h;
}

Act ResBlock::backward(const Act& dout, Mat* demb) {
  Act d = c2_.backward(dout);
  d.x = a2_.backward(drop_.backward(d.x));
  d = n2_.backward(d);
  if (has_time_) {
    const int hw = d.s.hw();
    Mat dtp(d.c(), d.s.b);
    for (int b = 0; b < d.s.b; ++b) {
      dtp.col(b) = d.x.middleCols(static_cast<Eigen::Index>(b) * hw, hw).rowwise().sum();
    }
    const Mat de = at_.backward(t_.backward(dtp));
    if (demb != nullptr) *demb += de;
  }
  d = c1_.backward(d);
  d.x = a1_.backward(d.x);
  Act dx = n1_.backward(d);
  if (has_skip_) {
    dx.x += skip_.backward(dout).x;
  } else {
    dx.x += dout.x;
  }
  return dx;
}

}  // namespace apeg::nn
