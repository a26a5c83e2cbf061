#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "apeg/errors.hpp"
#include "apeg/fingerprint.hpp"

using namespace apeg;
using namespace apeg::fp;
using channel::ChannelMatrix;

namespace {

ChannelMatrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  ChannelMatrix h(rows, cols);
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = {scale * rng.normal(), scale * rng.normal()};
  return h;
}

NormStats range(double lo, double hi) {
  NormStats n;
  n.min_re = n.min_im = lo;
  n.max_re = n.max_im = hi;
  return n;
}

}  // namespace

TEST(FitNorm, DegenerateRangeIsAnError) {
  const ChannelMatrix h = ChannelMatrix::Constant(8, 32, {1.0, 1.0});
  EXPECT_THROW(fit_norm({h}), DataError);
  EXPECT_THROW(fit_norm({}), DataError);
}

TEST(FitNorm, SpansGivenRange) {
  ChannelMatrix h = ChannelMatrix::Zero(2, 2);
  h(0, 0) = {-3.0, 0.5};
  h(1, 1) = {2.0, 5.0};
  const NormStats n = fit_norm({h});
  EXPECT_EQ(n.min_re, -3.0);
  EXPECT_EQ(n.max_re, 5.0);
  EXPECT_EQ(n.min_im, -3.0);
  EXPECT_EQ(n.max_im, 5.0);

  const NormStats p = fit_norm({h}, NormPolicy::PerPlane);
  EXPECT_EQ(p.min_re, -3.0);
  EXPECT_EQ(p.max_re, 2.0);
  EXPECT_EQ(p.min_im, 0.0);
  EXPECT_EQ(p.max_im, 5.0);
}

TEST(FitNorm, TrainSetReachesBothEnds) {
  Rng rng(4);
  std::vector<ChannelMatrix> train;
  for (int i = 0; i < 20; ++i) train.push_back(random_matrix(8, 32, rng));
  for (NormPolicy policy : {NormPolicy::Joint, NormPolicy::PerPlane}) {
    const NormStats n = fit_norm(train, policy);
    double lo = 1, hi = -1;
    for (const auto& h : train) {
      const Tensor img = to_image(h, n).planes;
      for (double v : img.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    EXPECT_EQ(lo, -1.0);
    EXPECT_EQ(hi, 1.0);
  }
}

TEST(Image, RoundTripWithinRange) {
  Rng rng(5);
  const ChannelMatrix h = random_matrix(8, 32, rng);
  const NormStats n = fit_norm({h});
  const ChannelMatrix back = from_image(to_image(h, n));
  EXPECT_LE((back - h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Image, OutOfRangeIsClamped) {
  ChannelMatrix h = ChannelMatrix::Zero(2, 3);
  h(0, 0) = {10.0, -10.0};
  const Tensor img = to_image(h, range(-1.0, 1.0)).planes;
  EXPECT_EQ(img(0, 0, 0, 0), 1.0);
  EXPECT_EQ(img(0, 1, 0, 0), -1.0);
}

TEST(Image, MinimumMapsToMinusOne) {
  const NormStats n = range(-2.0, 3.0);
  const ChannelMatrix h = ChannelMatrix::Constant(8, 32, {-2.0, 0.0});
  const Tensor img = to_image(h, n).planes;
  ASSERT_EQ(img.c(), 2);
  for (int m = 0; m < 8; ++m) {
    for (int k = 0; k < 32; ++k) {
      EXPECT_EQ(img(0, 0, m, k), -1.0);
      // Purely real input: imaginary plane holds the image of zero.
      EXPECT_DOUBLE_EQ(img(0, 1, m, k), 2.0 * (0.0 + 2.0) / 5.0 - 1.0);
    }
  }
}

TEST(Image, ZeroImageDecodesToRangeCentre) {
  const NormStats n = range(-2.0, 3.0);
  const ChannelMatrix h = from_image({Tensor(1, 2, 8, 32), n});
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    EXPECT_DOUBLE_EQ(h(i).real(), 0.5);
    EXPECT_DOUBLE_EQ(h(i).imag(), 0.5);
  }
}

TEST(Image, ImageToMatrixToImageIsStable) {
  Rng rng(6);
  const NormStats n = range(-3.0, 5.0);
  Tensor img(1, 2, 8, 32);
  for (double& v : img.values()) v = rng.uniform(-1.0, 1.0);
  const Tensor back = to_image(from_image({img, n}), n).planes;
  double worst = 0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(back[i] - img[i]));
  EXPECT_LE(worst, 1e-15);
}

TEST(Image, BatchedFormsAgree) {
  Rng rng(7);
  std::vector<ChannelMatrix> hs{random_matrix(4, 6, rng), random_matrix(4, 6, rng)};
  const NormStats n = fit_norm(hs);
  const Tensor batch = to_images(hs, n);
  ASSERT_EQ(batch.n(), 2);
  EXPECT_EQ(batch.sample(1), to_image(hs[1], n).planes);
  EXPECT_EQ(from_image_sample(batch, 1, n), from_image(to_image(hs[1], n)));
  hs.push_back(random_matrix(3, 6, rng));
  EXPECT_THROW(to_images(hs, n), ShapeError);
}

TEST(Pair, ShapeAndOrder) {
  Rng rng(8);
  const NormStats n = range(-4.0, 4.0);
  const FingerprintImage a = to_image(random_matrix(8, 32, rng), n);
  const FingerprintImage j = to_image(random_matrix(8, 32, rng), n);
  const PairImage p = concat_pair(a, j);
  EXPECT_EQ(p.planes.n(), 1);
  EXPECT_EQ(p.planes.c(), 2);
  EXPECT_EQ(p.planes.h(), 16);
  EXPECT_EQ(p.planes.w(), 32);
  EXPECT_EQ(p.planes(0, 1, 0, 5), j.planes(0, 1, 0, 5));
  EXPECT_EQ(p.planes(0, 1, 8, 5), a.planes(0, 1, 0, 5));
  const auto [a2, j2] = split_pair(p);
  EXPECT_EQ(a2.planes, a.planes);
  EXPECT_EQ(j2.planes, j.planes);
}

TEST(Pair, Mismatches) {
  Rng rng(8);
  const FingerprintImage a = to_image(random_matrix(8, 32, rng), range(-4, 4));
  const FingerprintImage b = to_image(random_matrix(8, 32, rng), range(-5, 4));
  EXPECT_THROW(concat_pair(a, b), ShapeError);
  const FingerprintImage c = to_image(random_matrix(4, 32, rng), range(-4, 4));
  EXPECT_THROW(concat_pair(a, c), ShapeError);
}

TEST(Mask, StructureAndPartition) {
  const Mask m = build_mask(channel::ArrayConfig{});
  ASSERT_EQ(m.h(), 16);
  ASSERT_EQ(m.w(), 32);
  double sum = 0;
  for (double v : m.values()) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_EQ(v * (1.0 - v), 0.0);
    sum += v;
  }
  EXPECT_EQ(sum, 2.0 * 8 * 32);
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(m(0, c, 7, 3), 0.0);
    EXPECT_EQ(m(0, c, 8, 3), 1.0);
  }

  Rng rng(9);
  Tensor pair(1, 2, 16, 32);
  for (double& v : pair.values()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < pair.size(); ++i) {
    const double alice = m[i] * pair[i];
    const double jack = (1.0 - m[i]) * pair[i];
    EXPECT_EQ(alice + jack, pair[i]);
  }
  // Mask times pair keeps the Alice block and zeroes Jack's.
  Tensor masked = pair;
  for (std::size_t i = 0; i < pair.size(); ++i) masked[i] *= m[i];
  EXPECT_EQ(bottom_rows(masked), bottom_rows(pair));
  EXPECT_EQ(top_rows(masked), Tensor(1, 2, 8, 32));
}

TEST(Norm, JsonRoundTrip) {
  const NormStats joint = range(-1.25, 3.5);
  EXPECT_EQ(norm_from_json(norm_to_json(joint)), joint);
  NormStats per;
  per.policy = NormPolicy::PerPlane;
  per.min_re = -1;
  per.max_re = 2;
  per.min_im = -3;
  per.max_im = 4;
  EXPECT_EQ(norm_from_json(norm_to_json(per)), per);
  EXPECT_THROW(norm_from_json(nlohmann::json{{"min", 1.0}}), DataError);
  EXPECT_THROW(norm_from_json(nlohmann::json{{"min", 1.0}, {"max", 1.0}}), DataError);
}
