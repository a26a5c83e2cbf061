#include "apeg/auth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apeg/errors.hpp"

namespace apeg::auth {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.n() != 1) throw ShapeError(std::string(what) + ": expected single images");
  if (a.size() == 0) throw ShapeError(std::string(what) + ": empty image");
}

double plane_ssim(const Tensor& a, const Tensor& b, int plane, double range) {
  const int H = a.h();
  const int W = a.w();
  const int wh = std::min(kSsimWindow, H);
  const int ww = std::min(kSsimWindow, W);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const double n = static_cast<double>(wh) * ww;
  double total = 0.0;
  int windows = 0;
  for (int y = 0; y + wh <= H; ++y) {
    for (int x = 0; x + ww <= W; ++x) {
      double sa = 0, sb = 0;
      for (int i = 0; i < wh; ++i) {
        for (int j = 0; j < ww; ++j) {
          sa += a(0, plane, y + i, x + j);
          sb += b(0, plane, y + i, x + j);
        }
      }
      const double ma = sa / n;
      const double mb = sb / n;
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < wh; ++i) {
        for (int j = 0; j < ww; ++j) {
          const double da = a(0, plane, y + i, x + j) - ma;
          const double db = b(0, plane, y + i, x + j) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= n;
      vb /= n;
      cov /= n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / windows;
}

}  // namespace

std::string metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::Ssim: return "ssim";
    case MetricKind::Psnr: return "psnr";
    case MetricKind::Cosine: return "cosine";
    case MetricKind::Nmse: return "nmse";
    case MetricKind::Euclidean: return "euclidean";
  }
  return "?";
}

MetricKind parse_metric(const std::string& s) {
  for (MetricKind k : kAllMetrics) {
    if (metric_name(k) == s) return k;
  }
  throw ConfigError("unknown metric kind '" + s + "'");
}

const char* label_name(Label l) { return l == Label::Alice ? "alice" : "eve"; }

double ssim(const Tensor& a, const Tensor& b, double range) {
  check_pair(a, b, "ssim");
  double sum = 0.0;
  for (int c = 0; c < a.c(); ++c) sum += plane_ssim(a, b, c, range);
  return sum / a.c();
}

double psnr(const Tensor& a, const Tensor& b, double range) {
  check_pair(a, b, "psnr");
  const double mse = (a.vec() - b.vec()).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCeilingDb;
  return std::min(kPsnrCeilingDb, 10.0 * std::log10(range * range / mse));
}

double cosine_sim(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "cosine_sim");
  const double na = a.vec().norm();
  const double nb = b.vec().norm();
  if (na == 0.0 || nb == 0.0) throw ShapeError("cosine similarity of an all-zero image");
  return a.vec().dot(b.vec()) / (na * nb);
}

double nmse_db(const Tensor& estimate, const Tensor& truth) {
  check_pair(estimate, truth, "nmse_db");
  const double energy = truth.vec().squaredNorm();
  if (energy == 0.0) throw ShapeError("NMSE against an all-zero reference");
  const double err = (estimate.vec() - truth.vec()).squaredNorm();
  if (err == 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(err / energy));
}

double euclid(const Tensor& a, const Tensor& b) {
  check_pair(a, b, "euclid");
  return (a.vec() - b.vec()).norm();
}

double metric_value(MetricKind k, const Tensor& generated, const Tensor& received) {
  switch (k) {
    case MetricKind::Ssim: return ssim(generated, received);
    case MetricKind::Psnr: return psnr(generated, received);
    case MetricKind::Cosine: return cosine_sim(generated, received);
    case MetricKind::Nmse: return nmse_db(generated, received);
    case MetricKind::Euclidean: return euclid(generated, received);
  }
  throw ConfigError("unknown metric kind");
}

double to_dissimilarity(MetricKind k, double value) {
  switch (k) {
    case MetricKind::Ssim:
    case MetricKind::Cosine: return 1.0 - value;
    case MetricKind::Psnr: return -value;
    case MetricKind::Nmse:
    case MetricKind::Euclidean: return value;
  }
  throw ConfigError("unknown metric kind");
}

double dissimilarity(MetricKind k, const Tensor& generated, const Tensor& received) {
  return to_dissimilarity(k, metric_value(k, generated, received));
}

std::size_t accept_count(std::size_t s, double k) {
  if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("attack ratio k must lie in [0, 1]");
  return static_cast<std::size_t>(std::llround(k * static_cast<double>(s)));
}

std::vector<Decision> decide_rank(const std::vector<double>& dissims, double k,
                                  const std::vector<Label>& labels) {
  if (dissims.empty()) throw DataError("empty authentication stream");
  if (!labels.empty() && labels.size() != dissims.size()) {
    throw ShapeError("one label per stream sample required");
  }
  const std::size_t accept = accept_count(dissims.size(), k);
  std::vector<std::size_t> order(dissims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dissims[a] < dissims[b]; });
  std::vector<Decision> out(dissims.size());
  for (std::size_t i = 0; i < dissims.size(); ++i) {
    out[i].index = i;
    out[i].dissimilarity = dissims[i];
    out[i].value = dissims[i];
    if (!labels.empty()) out[i].label = labels[i];
  }
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]].rank = r + 1;
    out[order[r]].accepted = r < accept;
  }
  return out;
}

Score score(const std::vector<Decision>& decisions) {
  Score s;
  for (const Decision& d : decisions) {
    const bool alice = d.label == Label::Alice;
    if (d.accepted && alice) ++s.counts.tp;
    if (d.accepted && !alice) ++s.counts.fp;
    if (!d.accepted && alice) ++s.counts.fn;
    if (!d.accepted && !alice) ++s.counts.tn;
  }
  const auto& c = s.counts;
  if (c.tp + c.fp > 0) s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) s.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tp + c.fp > 0 && c.tp + c.fn > 0 && s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  }
  if (c.total() > 0) s.error_rate = static_cast<double>(c.fp + c.fn) / static_cast<double>(c.total());
  return s;
}

}  // namespace apeg::auth
