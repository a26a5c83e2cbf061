#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "apeg/tensor.hpp"

namespace apeg::auth {

enum class MetricKind { Ssim, Psnr, Cosine, Nmse, Euclidean };

inline constexpr std::array<MetricKind, 5> kAllMetrics = {
    MetricKind::Ssim, MetricKind::Psnr, MetricKind::Cosine, MetricKind::Nmse, MetricKind::Euclidean};

inline constexpr double kDataRange = 2.0;  // images live in [-1, 1]
inline constexpr double kPsnrCeilingDb = 120.0;
inline constexpr double kNmseFloorDb = -120.0;
inline constexpr int kSsimWindow = 7;

std::string metric_name(MetricKind k);
MetricKind parse_metric(const std::string& s);

// All metrics take single images (1, C, H, W) of equal shape.

// Mean SSIM over every valid window position, computed per plane and then
// averaged over planes. The window is clamped to the image size.
double ssim(const Tensor& a, const Tensor& b, double range = kDataRange);
double psnr(const Tensor& a, const Tensor& b, double range = kDataRange);
double cosine_sim(const Tensor& a, const Tensor& b);
double nmse_db(const Tensor& estimate, const Tensor& truth);
double euclid(const Tensor& a, const Tensor& b);

double metric_value(MetricKind k, const Tensor& generated, const Tensor& received);
// Oriented so that smaller means more Alice-like.
double to_dissimilarity(MetricKind k, double value);
double dissimilarity(MetricKind k, const Tensor& generated, const Tensor& received);

enum class Label { Alice, Eve };
const char* label_name(Label l);

struct Decision {
  std::size_t index = 0;
  double value = 0;
  double dissimilarity = 0;
  std::size_t rank = 0;  // 1-based position in the ascending order
  bool accepted = false;
  Label label = Label::Eve;
};

// Stable ascending sort (ties keep index order); the round(k * s) smallest
// are accepted. `labels` may be empty.
std::vector<Decision> decide_rank(const std::vector<double>& dissims, double k,
                                  const std::vector<Label>& labels = {});
std::size_t accept_count(std::size_t s, double k);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct Score {
  Confusion counts;
  double precision = 0;
  double recall = 0;
  double f1 = 0;          // 0 when either denominator is empty
  double error_rate = 0;  // (FP + FN) / s
};

Score score(const std::vector<Decision>& decisions);

}  // namespace apeg::auth
