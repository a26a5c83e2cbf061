#pragma once

#include <string>
#include <vector>

#include "apeg/nn/layers.hpp"

namespace apeg::nn {

// Multi-head scaled dot-product attention on token-major inputs
// (tokens x d). Heads split the feature axis evenly; the concatenated head
// outputs go through `wo`/`bo` when given (y = concat * wo^T + bo).
Mat cross_attention(const Mat& q, const Mat& k, const Mat& v, int heads,
                    const Mat* wo = nullptr, const Eigen::VectorXd* bo = nullptr);

// x + cross_attention(x, x, x).
Mat self_attention(const Mat& x, int heads, const Mat* wo = nullptr,
                   const Eigen::VectorXd* bo = nullptr);

// Softmax weights of one head, (key tokens x query tokens), from
// feature-major q (d x S) and k (d x Sk). Columns sum to one.
Mat attention_weights(const Mat& q, const Mat& k);

// Residual attention block over the spatial positions of an activation.
// Self mode: keys and values come from the normalised input. Cross mode:
// they come from a context activation with the same batch size.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParamStore& ps, const std::string& name, int channels, int context_channels,
                 int heads, bool cross, Rng& rng);

  Act forward(const Act& x, const Act* context = nullptr);
  // Returns dL/dx; in cross mode dL/dcontext is added into `dcontext`.
  Act backward(const Act& dout, Act* dcontext = nullptr);

  bool cross() const { return cross_; }
  int out_weight_id() const { return o_.weight_id(); }
  int out_bias_id() const { return o_.bias_id(); }

 private:
  ParamStore* ps_ = nullptr;
  int c_ = 0, heads_ = 1;
  bool cross_ = false;
  GroupNorm norm_;
  Linear q_, k_, v_, o_;

  Mat xn_, ctx_, q_out_, k_out_, v_out_, attn_out_;
  std::vector<Mat> weights_;  // per (sample, head)
  Shape s_, ctx_s_;
};

}  // namespace apeg::nn
