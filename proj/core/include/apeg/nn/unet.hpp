#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apeg/nn/attention.hpp"
#include "apeg/nn/layers.hpp"
#include "apeg/nn/predictor.hpp"

namespace apeg::nn {

enum class Variant { Ccmdm = 0, Cadm = 1 };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct NetConfig {
  int in_channels = 2;
  int base_channels = 16;
  std::vector<int> channel_mults{1, 2, 2};
  int res_blocks = 1;
  std::vector<bool> self_attn{false, true, true};
  // Cross-attention is only built for the CADM variant.
  bool cross_attn = false;
  std::vector<bool> cross_attn_levels{false, true, true};
  int heads = 4;
  int time_embed_mult = 4;
  double dropout = 0.0;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  int width(int level) const { return base_channels * channel_mults.at(static_cast<std::size_t>(level)); }
  // Checks internal consistency and, when rows/cols are given, that the
  // spatial size survives every downsampling.
  void validate(int rows = 0, int cols = 0) const;
  bool operator==(const NetConfig&) const = default;
};

nlohmann::json net_config_to_json(const NetConfig& c);
NetConfig net_config_from_json(const nlohmann::json& j);

// U-shaped noise predictor. The CCMDM form sees the stacked pair image; the
// CADM form sees Alice's image and attends to features of the condition image
// from a separate encoder at every enabled level and in the middle block.
class UNet : public NoisePredictor {
 public:
  UNet(const NetConfig& cfg, Rng& init_rng);
  // Layers keep pointers into the parameter store.
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  Tensor forward(const Tensor& x, const std::vector<int>& steps, const Tensor* cond,
                 bool train) override;
  void backward(const Tensor& grad_out) override;
  ParamStore* params() override { return &ps_; }
  const ParamStore& param_store() const { return ps_; }
  void begin_sampling(const Tensor* cond) override;
  void end_sampling() override;

  const NetConfig& config() const { return cfg_; }
  // Dropout stream for training-mode forwards.
  void set_dropout_rng(Rng rng) { drop_rng_ = std::move(rng); }

  // Attention blocks in the main branch that read the condition features.
  std::vector<const AttentionBlock*> cross_blocks() const;

 private:
  struct Level {
    std::vector<ResBlock> res;
    std::vector<std::optional<AttentionBlock>> self_attn, cross_attn;
    std::optional<Conv2d> resample;  // down (encoder) or post-upsample conv (decoder)
  };

  std::vector<Act> encode_condition(const Tensor& cond);
  void backward_condition(std::vector<Act>& dctx);

  NetConfig cfg_;
  ParamStore ps_;
  Rng drop_rng_;
  bool cadm_ = false;

  TimeEmbedding temb_;
  Conv2d conv_in_;
  std::vector<Level> enc_, dec_;
  ResBlock mid1_, mid2_;
  AttentionBlock mid_self_;
  std::optional<AttentionBlock> mid_cross_;
  GroupNorm norm_out_;
  SiLU act_out_;
  Conv2d conv_out_;

  // Condition encoder (CADM).
  Conv2d cond_in_;
  std::vector<ResBlock> cond_res_;
  std::vector<std::optional<Conv2d>> cond_down_;

  // Forward caches.
  Mat emb_;
  std::vector<Act> ctx_;
  std::vector<int> skip_use_;  // skip index consumed by each decoder block, in order
  std::vector<Shape> up_shapes_;
  std::vector<Shape> skip_shapes_;
  std::vector<int> skip_channels_;
  bool cond_cached_ = false;
  bool sampling_ = false;
};

}  // namespace apeg::nn
