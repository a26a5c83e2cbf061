#include "apeg/nn/attention.hpp"

#include <cmath>

#include "apeg/errors.hpp"

namespace apeg::nn {

namespace {

void check_heads(Eigen::Index d, int heads) {
  if (heads < 1 || d % heads != 0) {
    throw ShapeError("attention width " + std::to_string(d) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

}  // namespace

Mat attention_weights(const Mat& q, const Mat& k) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.rows()));
  Mat s = (k.transpose() * q) * scale;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    auto col = s.col(j);
    col = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
  }
  return s;
}

Mat cross_attention(const Mat& q, const Mat& k, const Mat& v, int heads, const Mat* wo,
                    const Eigen::VectorXd* bo) {
  if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows()) {
    throw ShapeError("cross_attention: q, k, v widths or k/v token counts differ");
  }
  check_heads(q.cols(), heads);
  const Eigen::Index dk = q.cols() / heads;
  Mat concat(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    const Mat qh = q.middleCols(h * dk, dk).transpose();
    const Mat kh = k.middleCols(h * dk, dk).transpose();
    const Mat p = attention_weights(qh, kh);  // (Sk, Sq)
    concat.middleCols(h * dk, dk) = p.transpose() * v.middleCols(h * dk, dk);
  }
  if (wo == nullptr) return concat;
  Mat y = concat * wo->transpose();
  if (bo != nullptr) y.rowwise() += bo->transpose();
  return y;
}

Mat self_attention(const Mat& x, int heads, const Mat* wo, const Eigen::VectorXd* bo) {
  return x + cross_attention(x, x, x, heads, wo, bo);
}

AttentionBlock::AttentionBlock(ParamStore& ps, const std::string& name, int channels,
                               int context_channels, int heads, bool cross, Rng& rng)
    : ps_(&ps), c_(channels), heads_(heads), cross_(cross) {
  check_heads(channels, heads);
  const int cc = cross ? context_channels : channels;
  norm_ = GroupNorm(ps, name + ".norm", channels);
  q_ = Linear(ps, name + ".q", channels, channels, rng);
  k_ = Linear(ps, name + ".k", cc, channels, rng);
  v_ = Linear(ps, name + ".v", cc, channels, rng);
  o_ = Linear(ps, name + ".out", channels, channels, rng, Init::Zero);
}

Act AttentionBlock::forward(const Act& x, const Act* context) {
  if (cross_ && context == nullptr) throw ShapeError("cross-attention needs a context");
  if (cross_ && context->s.b != x.s.b) throw ShapeError("context batch size differs");
  s_ = x.s;
  xn_ = norm_.forward(x).x;
  ctx_s_ = cross_ ? context->s : x.s;
  const Mat& src = cross_ ? context->x : xn_;
  if (cross_) ctx_ = context->x;
  q_out_ = q_.forward(xn_);
  k_out_ = k_.forward(src);
  v_out_ = v_.forward(src);

  const int S = s_.hw();
  const int Sk = ctx_s_.hw();
  const int dk = c_ / heads_;
  attn_out_.resize(c_, s_.cols());
  weights_.resize(static_cast<std::size_t>(s_.b) * heads_);
  for (int b = 0; b < s_.b; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const auto qh = q_out_.block(h * dk, static_cast<Eigen::Index>(b) * S, dk, S);
      const auto kh = k_out_.block(h * dk, static_cast<Eigen::Index>(b) * Sk, dk, Sk);
      const auto vh = v_out_.block(h * dk, static_cast<Eigen::Index>(b) * Sk, dk, Sk);
      Mat& p = weights_[static_cast<std::size_t>(b * heads_ + h)];
      p = attention_weights(qh, kh);
      attn_out_.block(h * dk, static_cast<Eigen::Index>(b) * S, dk, S).noalias() = vh * p;
    }
  }
  Act out;
  out.s = s_;
  out.x = x.x + o_.forward(attn_out_);
  return out;
}

Act AttentionBlock::backward(const Act& dout, Act* dcontext) {
  const int S = s_.hw();
  const int Sk = ctx_s_.hw();
  const int dk = c_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Mat dattn = o_.backward(dout.x);
  Mat dq(c_, s_.cols());
  Mat dk_m(c_, ctx_s_.cols());
  Mat dv(c_, ctx_s_.cols());
  for (int b = 0; b < s_.b; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const Eigen::Index qc = static_cast<Eigen::Index>(b) * S;
      const Eigen::Index kc = static_cast<Eigen::Index>(b) * Sk;
      const Mat& p = weights_[static_cast<std::size_t>(b * heads_ + h)];
      const auto qh = q_out_.block(h * dk, qc, dk, S);
      const auto kh = k_out_.block(h * dk, kc, dk, Sk);
      const auto vh = v_out_.block(h * dk, kc, dk, Sk);
      const auto dO = dattn.block(h * dk, qc, dk, S);
      dv.block(h * dk, kc, dk, Sk).noalias() = dO * p.transpose();
      const Mat dp = vh.transpose() * dO;  // (Sk, S)
      Mat ds = p.cwiseProduct(dp);
      const Eigen::RowVectorXd colsum = ds.colwise().sum();
      ds -= p * colsum.asDiagonal();
      ds *= scale;
      dq.block(h * dk, qc, dk, S).noalias() = kh * ds;
      dk_m.block(h * dk, kc, dk, Sk).noalias() = qh * ds.transpose();
    }
  }
  Mat dxn = q_.backward(dq);
  Mat dsrc = k_.backward(dk_m);
  dsrc += v_.backward(dv);
  if (cross_) {
    if (dcontext != nullptr) dcontext->x += dsrc;
  } else {
    dxn += dsrc;
  }
  Act dx = norm_.backward(Act{dxn, s_});
  dx.x += dout.x;
  return dx;
}

}  // namespace apeg::nn
