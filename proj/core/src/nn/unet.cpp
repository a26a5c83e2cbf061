#include "apeg/nn/unet.hpp"

#include <nlohmann/json.hpp>

#include "apeg/errors.hpp"

namespace apeg::nn {

const char* variant_name(Variant v) { return v == Variant::Ccmdm ? "ccmdm" : "cadm"; }

Variant parse_variant(const std::string& s) {
  if (s == "ccmdm") return Variant::Ccmdm;
  if (s == "cadm") return Variant::Cadm;
  throw ConfigError("unknown network variant '" + s + "'");
}

void NetConfig::validate(int rows, int cols) const {
  const auto L = static_cast<std::size_t>(levels());
  if (L < 1) throw ConfigError("channel_mults must name at least one level");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (base_channels < 2 || base_channels % 2 != 0) {
    throw ConfigError("base_channels must be even and >= 2");
  }
  for (int m : channel_mults) {
    if (m < 1) throw ConfigError("channel multipliers must be >= 1");
  }
  if (res_blocks < 1) throw ConfigError("res_blocks must be >= 1");
  if (self_attn.size() != L) throw ConfigError("self_attn needs one flag per level");
  if (cross_attn_levels.size() != L) throw ConfigError("cross_attn_levels needs one flag per level");
  if (time_embed_mult < 1) throw ConfigError("time_embed_mult must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  for (std::size_t l = 0; l < L; ++l) {
    const bool attended = self_attn[l] || (cross_attn && cross_attn_levels[l]) || l + 1 == L;
    if (attended && width(static_cast<int>(l)) % heads != 0) {
      throw ConfigError("heads must divide the channel width of every attended level");
    }
  }
  const int f = 1 << (levels() - 1);
  if ((rows > 0 && rows % f != 0) || (cols > 0 && cols % f != 0)) {
    throw ConfigError("image size " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " is not divisible by 2^(levels-1)");
  }
}

nlohmann::json net_config_to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_channels", c.base_channels},
          {"channel_mults", c.channel_mults},
          {"res_blocks", c.res_blocks},
          {"self_attn", c.self_attn},
          {"cross_attn", c.cross_attn},
          {"cross_attn_levels", c.cross_attn_levels},
          {"heads", c.heads},
          {"time_embed_mult", c.time_embed_mult},
          {"dropout", c.dropout}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_mults = j.at("channel_mults").get<std::vector<int>>();
  c.res_blocks = j.at("res_blocks").get<int>();
  c.self_attn = j.at("self_attn").get<std::vector<bool>>();
  c.cross_attn = j.at("cross_attn").get<bool>();
  c.cross_attn_levels = j.at("cross_attn_levels").get<std::vector<bool>>();
  c.heads = j.at("heads").get<int>();
  c.time_embed_mult = j.at("time_embed_mult").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

UNet::UNet(const NetConfig& cfg, Rng& rng) : cfg_(cfg), drop_rng_(rng.fork("dropout")) {
  cfg_.validate();
  cadm_ = cfg_.cross_attn;
  const int L = cfg_.levels();
  const int E = cfg_.time_embed_mult * cfg_.base_channels;
  const double p = cfg_.dropout;

  temb_ = TimeEmbedding(ps_, "time", cfg_.base_channels, E, rng);
  conv_in_ = Conv2d(ps_, "conv_in", cfg_.in_channels, cfg_.base_channels, 3, 1, rng);

  std::vector<int> skips{cfg_.base_channels};
  int c = cfg_.base_channels;
  for (int l = 0; l < L; ++l) {
    Level lev;
    const std::string pre = "enc" + std::to_string(l);
    for (int r = 0; r < cfg_.res_blocks; ++r) {
      const std::string name = pre + ".res" + std::to_string(r);
      lev.res.emplace_back(ps_, name, c, cfg_.width(l), E, p, rng);
      c = cfg_.width(l);
      lev.self_attn.emplace_back();
      lev.cross_attn.emplace_back();
      if (cfg_.self_attn[static_cast<std::size_t>(l)]) {
        lev.self_attn.back().emplace(ps_, name + ".attn", c, c, cfg_.heads, false, rng);
      }
      if (cadm_ && cfg_.cross_attn_levels[static_cast<std::size_t>(l)]) {
        lev.cross_attn.back().emplace(ps_, name + ".xattn", c, c, cfg_.heads, true, rng);
      }
      skips.push_back(c);
    }
    if (l + 1 < L) {
      lev.resample.emplace(ps_, pre + ".down", c, c, 3, 2, rng);
      skips.push_back(c);
    }
    enc_.push_back(std::move(lev));
  }

  mid1_ = ResBlock(ps_, "mid.res0", c, c, E, p, rng);
  mid_self_ = AttentionBlock(ps_, "mid.attn", c, c, cfg_.heads, false, rng);
  if (cadm_) mid_cross_.emplace(ps_, "mid.xattn", c, c, cfg_.heads, true, rng);
  mid2_ = ResBlock(ps_, "mid.res1", c, c, E, p, rng);

  for (int l = L - 1; l >= 0; --l) {
    Level lev;
    const std::string pre = "dec" + std::to_string(l);
    for (int r = 0; r <= cfg_.res_blocks; ++r) {
      const std::string name = pre + ".res" + std::to_string(r);
      const int sc = skips.back();
      skips.pop_back();
      lev.res.emplace_back(ps_, name, c + sc, cfg_.width(l), E, p, rng);
      c = cfg_.width(l);
      lev.self_attn.emplace_back();
      lev.cross_attn.emplace_back();
      if (cfg_.self_attn[static_cast<std::size_t>(l)]) {
        lev.self_attn.back().emplace(ps_, name + ".attn", c, c, cfg_.heads, false, rng);
      }
      if (cadm_ && cfg_.cross_attn_levels[static_cast<std::size_t>(l)]) {
        lev.cross_attn.back().emplace(ps_, name + ".xattn", c, c, cfg_.heads, true, rng);
      }
    }
    if (l > 0) lev.resample.emplace(ps_, pre + ".up", c, c, 3, 1, rng);
    dec_.push_back(std::move(lev));
  }
  norm_out_ = GroupNorm(ps_, "out.norm", c);
  conv_out_ = Conv2d(ps_, "out.conv", c, cfg_.in_channels, 3, 1, rng, Init::Zero);

  if (cadm_) {
    cond_in_ = Conv2d(ps_, "cond.conv_in", cfg_.in_channels, cfg_.base_channels, 3, 1, rng);
    int cc = cfg_.base_channels;
    for (int l = 0; l < L; ++l) {
      const std::string pre = "cond" + std::to_string(l);
      cond_res_.emplace_back(ps_, pre + ".res", cc, cfg_.width(l), 0, p, rng);
      cc = cfg_.width(l);
      cond_down_.emplace_back();
      if (l + 1 < L) cond_down_.back().emplace(ps_, pre + ".down", cc, cc, 3, 2, rng);
    }
  }
}

std::vector<const AttentionBlock*> UNet::cross_blocks() const {
  std::vector<const AttentionBlock*> out;
  for (const auto* levels : {&enc_, &dec_}) {
    for (const Level& lev : *levels) {
      for (const auto& a : lev.cross_attn) {
        if (a) out.push_back(&*a);
      }
    }
  }
  if (mid_cross_) out.push_back(&*mid_cross_);
  return out;
}

std::vector<Act> UNet::encode_condition(const Tensor& cond) {
  std::vector<Act> ctx;
  Act c = cond_in_.forward(from_tensor(cond));
  for (std::size_t l = 0; l < cond_res_.size(); ++l) {
    c = cond_res_[l].forward(c, nullptr, false, nullptr);
    ctx.push_back(c);
    if (cond_down_[l]) c = cond_down_[l]->forward(c);
  }
  return ctx;
}

void UNet::begin_sampling(const Tensor* cond) {
  sampling_ = true;
  cond_cached_ = false;
  if (cadm_) {
    if (cond == nullptr) throw ShapeError("CADM sampling needs a condition image");
    ctx_ = encode_condition(*cond);
    cond_cached_ = true;
  }
}

void UNet::end_sampling() {
  sampling_ = false;
  cond_cached_ = false;
}

Tensor UNet::forward(const Tensor& x, const std::vector<int>& steps, const Tensor* cond,
                     bool train) {
  if (x.c() != cfg_.in_channels) {
    throw ShapeError("network expects " + std::to_string(cfg_.in_channels) + " input planes, got " +
                     x.shape_str());
  }
  cfg_.validate(x.h(), x.w());
  if (static_cast<int>(steps.size()) != x.n()) throw ShapeError("one step index per sample required");
  Rng* rng = train ? &drop_rng_ : nullptr;

  if (cadm_) {
    if (!(sampling_ && cond_cached_)) {
      if (cond == nullptr) throw ShapeError("CADM forward needs a condition image");
      if (cond->n() != x.n() || cond->c() != x.c()) {
        throw ShapeError("condition " + cond->shape_str() + " does not match input " + x.shape_str());
      }
      ctx_ = encode_condition(*cond);
    } else if (ctx_.front().s.b != x.n()) {
      throw ShapeError("cached condition batch differs from input batch");
    }
  }

  emb_ = temb_.forward(steps);
  const int L = cfg_.levels();

  Act h = conv_in_.forward(from_tensor(x));
  std::vector<Act> skips{h};
  for (int l = 0; l < L; ++l) {
    Level& lev = enc_[static_cast<std::size_t>(l)];
    for (std::size_t r = 0; r < lev.res.size(); ++r) {
      h = lev.res[r].forward(h, &emb_, train, rng);
      if (lev.self_attn[r]) h = lev.self_attn[r]->forward(h);
      if (lev.cross_attn[r]) h = lev.cross_attn[r]->forward(h, &ctx_[static_cast<std::size_t>(l)]);
      skips.push_back(h);
    }
    if (lev.resample) {
      h = lev.resample->forward(h);
      skips.push_back(h);
    }
  }
  skip_shapes_.clear();
  skip_channels_.clear();
  for (const Act& s : skips) {
    skip_shapes_.push_back(s.s);
    skip_channels_.push_back(s.c());
  }

  h = mid1_.forward(h, &emb_, train, rng);
  h = mid_self_.forward(h);
  if (mid_cross_) h = mid_cross_->forward(h, &ctx_.back());
  h = mid2_.forward(h, &emb_, train, rng);

  skip_use_.clear();
  up_shapes_.clear();
  for (std::size_t k = 0; k < dec_.size(); ++k) {
    Level& lev = dec_[k];
    const std::size_t l = dec_.size() - 1 - k;
    for (std::size_t r = 0; r < lev.res.size(); ++r) {
      skip_use_.push_back(static_cast<int>(skips.size()) - 1);
      h = concat_channels(h, skips.back());
      skips.pop_back();
      h = lev.res[r].forward(h, &emb_, train, rng);
      if (lev.self_attn[r]) h = lev.self_attn[r]->forward(h);
      if (lev.cross_attn[r]) h = lev.cross_attn[r]->forward(h, &ctx_[l]);
    }
    if (lev.resample) {
      up_shapes_.push_back(h.s);
      h = lev.resample->forward(upsample2x(h));
    } else {
      up_shapes_.push_back({});
    }
  }

  h = norm_out_.forward(h);
  h.x = act_out_.forward(h.x);
  return to_tensor(conv_out_.forward(h));
}

void UNet::backward(const Tensor& grad_out) {
  if (sampling_) throw ShapeError("backward is unavailable during sampling");
  const int L = cfg_.levels();
  const int B = grad_out.n();
  Mat demb = Mat::Zero(emb_.rows(), B);
  std::vector<Act> dctx;
  for (const Act& c : ctx_) dctx.push_back(Act{Mat::Zero(c.x.rows(), c.x.cols()), c.s});
  std::vector<Mat> dskip(skip_shapes_.size());
  for (std::size_t i = 0; i < dskip.size(); ++i) {
    dskip[i] = Mat::Zero(skip_channels_[i], skip_shapes_[i].cols());
  }

  Act d = conv_out_.backward(from_tensor(grad_out));
  d.x = act_out_.backward(d.x);
  d = norm_out_.backward(d);

  int use = static_cast<int>(skip_use_.size()) - 1;
  for (int k = static_cast<int>(dec_.size()) - 1; k >= 0; --k) {
    Level& lev = dec_[static_cast<std::size_t>(k)];
    const std::size_t l = dec_.size() - 1 - static_cast<std::size_t>(k);
    if (lev.resample) d = upsample2x_backward(lev.resample->backward(d), up_shapes_[static_cast<std::size_t>(k)]);
    for (int r = static_cast<int>(lev.res.size()) - 1; r >= 0; --r) {
      const auto ru = static_cast<std::size_t>(r);
      if (lev.cross_attn[ru]) d = lev.cross_attn[ru]->backward(d, &dctx[l]);
      if (lev.self_attn[ru]) d = lev.self_attn[ru]->backward(d);
      d = lev.res[ru].backward(d, &demb);
      const auto si = static_cast<std::size_t>(skip_use_[static_cast<std::size_t>(use--)]);
      const int sc = skip_channels_[si];
      dskip[si] += d.x.bottomRows(sc);
      d.x = Mat(d.x.topRows(d.c() - sc));
    }
  }

  d = mid2_.backward(d, &demb);
  if (mid_cross_) d = mid_cross_->backward(d, &dctx.back());
  d = mid_self_.backward(d);
  d = mid1_.backward(d, &demb);

  const int nr = cfg_.res_blocks;
  for (int l = L - 1; l >= 0; --l) {
    Level& lev = enc_[static_cast<std::size_t>(l)];
    const std::size_t base = 1 + static_cast<std::size_t>(l) * static_cast<std::size_t>(nr + 1);
    if (lev.resample) {
      d.x += dskip[base + static_cast<std::size_t>(nr)];
      d = lev.resample->backward(d);
    }
    for (int r = nr - 1; r >= 0; --r) {
      const auto ru = static_cast<std::size_t>(r);
      d.x += dskip[base + ru];
      if (lev.cross_attn[ru]) d = lev.cross_attn[ru]->backward(d, &dctx[static_cast<std::size_t>(l)]);
      if (lev.self_attn[ru]) d = lev.self_attn[ru]->backward(d);
      d = lev.res[ru].backward(d, &demb);
    }
  }
  d.x += dskip[0];
  conv_in_.backward(d);
  temb_.backward(demb);
  if (cadm_) backward_condition(dctx);
}

void UNet::backward_condition(std::vector<Act>& dctx) {
  Act dc;
  for (int l = static_cast<int>(cond_res_.size()) - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    if (cond_down_[lu]) {
      dc = cond_down_[lu]->backward(dc);
      dc.x += dctx[lu].x;
    } else {
      dc = dctx[lu];
    }
    dc = cond_res_[lu].backward(dc, nullptr);
  }
  cond_in_.backward(dc);
}

}  // namespace apeg::nn
