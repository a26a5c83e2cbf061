#pragma once

#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "apeg/channel_sim.hpp"
#include "apeg/tensor.hpp"

namespace apeg::fp {

enum class NormPolicy { Joint, PerPlane };

// Min-max statistics of the training split. With the joint policy both
// planes share one range.
struct NormStats {
  NormPolicy policy = NormPolicy::Joint;
  double min_re = -1.0, max_re = 1.0;
  double min_im = -1.0, max_im = 1.0;

  double lo(int plane) const { return plane == 0 ? min_re : min_im; }
  double hi(int plane) const { return plane == 0 ? max_re : max_im; }
  void validate() const;
  bool operator==(const NormStats&) const = default;
};

NormStats fit_norm(const std::vector<channel::ChannelMatrix>& train,
                   NormPolicy policy = NormPolicy::Joint);

nlohmann::json norm_to_json(const NormStats& n);
NormStats norm_from_json(const nlohmann::json& j);

// Two-plane image (plane 0 real, plane 1 imaginary) stored as (1, 2, H, W).
struct FingerprintImage {
  Tensor planes;
  NormStats norm;

  int rows() const { return planes.h(); }
  int cols() const { return planes.w(); }
};

// Jack occupies rows [0, M), Alice rows [M, 2M).
struct PairImage {
  Tensor planes;
  NormStats norm;

  int block_rows() const { return planes.h() / 2; }
};

// Binary (1, 2, 2M, K) tensor: 1 on the Alice block, 0 on the Jack block.
using Mask = Tensor;

FingerprintImage to_image(const channel::ChannelMatrix& h, const NormStats& norm);
channel::ChannelMatrix from_image(const FingerprintImage& img);

// Batched forms used by training and sampling: (N, 2, M, K).
Tensor to_images(const std::vector<channel::ChannelMatrix>& hs, const NormStats& norm);
channel::ChannelMatrix from_image_sample(const Tensor& batch, int index,
                                         const NormStats& norm);

PairImage concat_pair(const FingerprintImage& alice, const FingerprintImage& jack);
std::pair<FingerprintImage, FingerprintImage> split_pair(const PairImage& pair);  // (alice, jack)

// Tensor-level concatenation for batches: (N,2,M,K) x2 -> (N,2,2M,K).
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor bottom_rows(const Tensor& pair);
Tensor top_rows(const Tensor& pair);

Mask build_mask(const channel::ArrayConfig& cfg);
Mask build_mask(int block_rows, int cols);

}  // namespace apeg::fp
