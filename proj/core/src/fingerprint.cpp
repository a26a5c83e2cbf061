#include "apeg/fingerprint.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "apeg/errors.hpp"

namespace apeg::fp {

namespace {

double encode(double x, double lo, double hi) {
  return std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0);
}

double decode(double v, double lo, double hi) { return (v + 1.0) * 0.5 * (hi - lo) + lo; }

}  // namespace

void NormStats::validate() const {
  if (!(min_re < max_re) || !(min_im < max_im)) {
    throw DataError("degenerate normalization range");
  }
}

NormStats fit_norm(const std::vector<channel::ChannelMatrix>& train, NormPolicy policy) {
  if (train.empty()) throw DataError("cannot fit normalization on an empty set");
  constexpr double inf = std::numeric_limits<double>::infinity();
  double lo_re = inf, hi_re = -inf, lo_im = inf, hi_im = -inf;
  for (const auto& h : train) {
    lo_re = std::min(lo_re, h.real().minCoeff());
    hi_re = std::max(hi_re, h.real().maxCoeff());
    lo_im = std::min(lo_im, h.imag().minCoeff());
    hi_im = std::max(hi_im, h.imag().maxCoeff());
  }
  NormStats n;
  n.policy = policy;
  if (policy == NormPolicy::Joint) {
    n.min_re = n.min_im = std::min(lo_re, lo_im);
    n.max_re = n.max_im = std::max(hi_re, hi_im);
  } else {
    n.min_re = lo_re;
    n.max_re = hi_re;
    n.min_im = lo_im;
    n.max_im = hi_im;
  }
  n.validate();
  return n;
}

nlohmann::json norm_to_json(const NormStats& n) {
  if (n.policy == NormPolicy::Joint) return {{"min", n.min_re}, {"max", n.max_re}};
  return {{"min", n.min_re}, {"max", n.max_re}, {"min_imag", n.min_im}, {"max_imag", n.max_im}};
}

NormStats norm_from_json(const nlohmann::json& j) {
  try {
    NormStats n;
    n.min_re = n.min_im = j.at("min").get<double>();
    n.max_re = n.max_im = j.at("max").get<double>();
    if (j.contains("min_imag")) {
      n.policy = NormPolicy::PerPlane;
      n.min_im = j.at("min_imag").get<double>();
      n.max_im = j.at("max_imag").get<double>();
    }
    n.validate();
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad normalization metadata: ") + e.what());
  }
}

FingerprintImage to_image(const channel::ChannelMatrix& h, const NormStats& norm) {
  norm.validate();
  const int M = static_cast<int>(h.rows());
  const int K = static_cast<int>(h.cols());
  FingerprintImage img{Tensor(1, 2, M, K), norm};
  for (int m = 0; m < M; ++m) {
    for (int k = 0; k < K; ++k) {
      img.planes(0, 0, m, k) = encode(h(m, k).real(), norm.min_re, norm.max_re);
      img.planes(0, 1, m, k) = encode(h(m, k).imag(), norm.min_im, norm.max_im);
    }
  }
  return img;
}

channel::ChannelMatrix from_image_sample(const Tensor& batch, int index, const NormStats& norm) {
  if (batch.c() != 2) throw ShapeError("fingerprint images have two planes");
  channel::ChannelMatrix h(batch.h(), batch.w());
  for (int m = 0; m < batch.h(); ++m) {
    for (int k = 0; k < batch.w(); ++k) {
      h(m, k) = {decode(batch(index, 0, m, k), norm.min_re, norm.max_re),
                 decode(batch(index, 1, m, k), norm.min_im, norm.max_im)};
    }
  }
  return h;
}

channel::ChannelMatrix from_image(const FingerprintImage& img) {
  if (img.planes.n() != 1) throw ShapeError("expected a single image");
  return from_image_sample(img.planes, 0, img.norm);
}

Tensor to_images(const std::vector<channel::ChannelMatrix>& hs, const NormStats& norm) {
  if (hs.empty()) return {};
  const int M = static_cast<int>(hs.front().rows());
  const int K = static_cast<int>(hs.front().cols());
  Tensor out(static_cast<int>(hs.size()), 2, M, K);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (hs[i].rows() != M || hs[i].cols() != K) throw ShapeError("mixed channel shapes");
    out.set_sample(static_cast<int>(i), to_image(hs[i], norm).planes);
  }
  return out;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_same_shape(top, bottom, "concat_rows");
  const int H = top.h();
  Tensor out(top.n(), top.c(), 2 * H, top.w());
  for (int n = 0; n < top.n(); ++n) {
    for (int c = 0; c < top.c(); ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < top.w(); ++w) {
          out(n, c, h, w) = top(n, c, h, w);
          out(n, c, H + h, w) = bottom(n, c, h, w);
        }
      }
    }
  }
  return out;
}

namespace {

Tensor rows_of(const Tensor& pair, int offset) {
  if (pair.h() % 2 != 0) throw ShapeError("pair image needs an even row count");
  const int H = pair.h() / 2;
  Tensor out(pair.n(), pair.c(), H, pair.w());
  for (int n = 0; n < pair.n(); ++n) {
    for (int c = 0; c < pair.c(); ++c) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < pair.w(); ++w) out(n, c, h, w) = pair(n, c, offset + h, w);
      }
    }
  }
  return out;
}

}  // namespace

Tensor top_rows(const Tensor& pair) { return rows_of(pair, 0); }
Tensor bottom_rows(const Tensor& pair) { return rows_of(pair, pair.h() / 2); }

PairImage concat_pair(const FingerprintImage& alice, const FingerprintImage& jack) {
  if (!(alice.norm == jack.norm)) throw ShapeError("concat_pair: normalization differs");
  return {concat_rows(jack.planes, alice.planes), alice.norm};
}

std::pair<FingerprintImage, FingerprintImage> split_pair(const PairImage& pair) {
  return {FingerprintImage{bottom_rows(pair.planes), pair.norm},
          FingerprintImage{top_rows(pair.planes), pair.norm}};
}

Mask build_mask(int block_rows, int cols) {
  if (block_rows < 1 || cols < 1) throw ShapeError("mask dimensions must be positive");
  Mask m(1, 2, 2 * block_rows, cols);
  for (int c = 0; c < 2; ++c) {
    for (int h = block_rows; h < 2 * block_rows; ++h) {
      for (int w = 0; w < cols; ++w) m(0, c, h, w) = 1.0;
    }
  }
  return m;
}

Mask build_mask(const channel::ArrayConfig& cfg) {
  cfg.validate();
  return build_mask(cfg.tx_antennas, cfg.subcarriers);
}

}  // namespace apeg::fp
