#include <gtest/gtest.h>

#include <functional>

#include "apeg/errors.hpp"
#include "apeg/nn/adam.hpp"
#include "apeg/nn/attention.hpp"
#include "apeg/nn/layers.hpp"
#include "support/oracles.hpp"

using namespace apeg;
using namespace apeg::nn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

void randomise(ParamStore& ps, Rng& rng, double scale = 0.5) {
  for (int i = 0; i < ps.size(); ++i) {
    auto& v = ps.block(i).value;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = scale * rng.normal();
  }
}

// Central-difference check of loss(x) = <forward(x), r> against the analytic
// input and parameter gradients. Returns the worst relative error.
double gradient_error(ParamStore& ps, Mat x, const std::function<Mat(const Mat&)>& forward,
                      const std::function<Mat(const Mat&)>& backward, Rng& rng) {
  const Mat y0 = forward(x);
  const Mat r = random_mat(y0.rows(), y0.cols(), rng);
  ps.zero_grad();
  forward(x);
  const Mat dx = backward(r);
  const Eigen::VectorXd dparams = ps.flat_grads();

  const double h = 1e-5;
  auto loss = [&](const Mat& in) { return forward(in).cwiseProduct(r).sum(); };
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3}); };
  double worst = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = loss(x);
    x(i) = keep - h;
    const double down = loss(x);
    x(i) = keep;
    worst = std::max(worst, rel(dx(i), (up - down) / (2 * h)));
  }
  Eigen::VectorXd p = ps.flat_values();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    ps.set_flat_values(p);
    const double up = loss(x);
    p[i] = keep - h;
    ps.set_flat_values(p);
    const double down = loss(x);
    p[i] = keep;
    ps.set_flat_values(p);
    worst = std::max(worst, rel(dparams[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace

TEST(ParamStore, RegistrationAndFlatViews) {
  ParamStore ps;
  const int a = ps.add("a", {2, 3});
  const int b = ps.add("b", {4});
  EXPECT_EQ(ps.size(), 2);
  EXPECT_EQ(ps.total(), 10u);
  EXPECT_EQ(ps.find("b"), b);
  EXPECT_EQ(ps.find("zz"), -1);
  EXPECT_THROW(ps.add("a", {1}), ShapeError);
  EXPECT_THROW(ps.add("c", {0}), ShapeError);
  EXPECT_EQ(ps.value(a).rows(), 2);
  EXPECT_EQ(ps.value(a).cols(), 3);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(10, 0, 9);
  ps.set_flat_values(v);
  EXPECT_EQ(ps.flat_values(), v);
  EXPECT_EQ(ps.block(b).value[0], 6.0);
  ps.grad(b)(1, 0) = 3.0;
  ps.zero_grad();
  EXPECT_EQ(ps.flat_grads().squaredNorm(), 0.0);
  ps.block(a).value[0] = 0.1;
  ps.round_to_float();
  EXPECT_EQ(ps.block(a).value[0], static_cast<double>(0.1f));
}

TEST(Layers, ActRoundTrip) {
  Rng rng(1);
  Tensor t(2, 3, 4, 5);
  for (double& v : t.values()) v = rng.normal();
  const Act a = from_tensor(t);
  EXPECT_EQ(a.c(), 3);
  EXPECT_EQ(a.x.cols(), 40);
  EXPECT_EQ(a.x(2, (1 * 4 + 3) * 5 + 4), t(1, 2, 3, 4));
  EXPECT_EQ(to_tensor(a), t);
}

TEST(Layers, GroupCount) {
  EXPECT_EQ(group_count(16), 4);
  EXPECT_EQ(group_count(6), 3);
  EXPECT_EQ(group_count(2), 2);
  EXPECT_EQ(group_count(5), 1);
}

TEST(Layers, ConvMatchesDirectSum) {
  ParamStore ps;
  Rng rng(2);
  Conv2d conv(ps, "c", 2, 3, 3, 1, rng);
  randomise(ps, rng);
  Act in{random_mat(2, 1 * 4 * 5, rng), {1, 4, 5}};
  const Act out = conv.forward(in);
  ASSERT_EQ(out.s, (Shape{1, 4, 5}));
  const Mat w = ps.value(conv.weight_id());
  const Mat b = ps.value(conv.bias_id());
  // Weight columns are ordered (ky, kx, cin); zero padding of one.
  for (int co = 0; co < 3; ++co) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        double s = b(co, 0);
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = y + ky - 1, ix = x + kx - 1;
            if (iy < 0 || iy >= 4 || ix < 0 || ix >= 5) continue;
            for (int ci = 0; ci < 2; ++ci) s += w(co, (ky * 3 + kx) * 2 + ci) * in.x(ci, iy * 5 + ix);
          }
        }
        EXPECT_NEAR(out.x(co, y * 5 + x), s, 1e-12);
      }
    }
  }
}

TEST(Layers, ConvStrideTwoHalvesSize) {
  ParamStore ps;
  Rng rng(3);
  Conv2d conv(ps, "c", 2, 4, 3, 2, rng);
  const Act out = conv.forward({random_mat(2, 2 * 8 * 6, rng), {2, 8, 6}});
  EXPECT_EQ(out.s, (Shape{2, 4, 3}));
  EXPECT_EQ(out.c(), 4);
}

TEST(Layers, ConvGradients) {
  for (int stride : {1, 2}) {
    for (int kernel : {1, 3}) {
      ParamStore ps;
      Rng rng(4);
      Conv2d conv(ps, "c", 3, 2, kernel, stride, rng);
      randomise(ps, rng);
      const Shape s{2, 4, 4};
      const double err = gradient_error(
          ps, random_mat(3, s.cols(), rng), [&](const Mat& x) { return conv.forward({x, s}).x; },
          [&](const Mat& r) {
            const Shape o{2, 4 / stride, 4 / stride};
            return conv.backward({r, o}).x;
          },
          rng);
      EXPECT_LT(err, 1e-6) << stride << " " << kernel;
    }
  }
}

TEST(Layers, SinglePrecisionConvIsClose) {
  ParamStore ps;
  Rng rng(5);
  Conv2d conv(ps, "c", 4, 4, 3, 1, rng);
  const Act in{random_mat(4, 2 * 6 * 6, rng), {2, 6, 6}};
  const Mat exact = conv.forward(in).x;
  EXPECT_EQ(gemm_precision(), GemmPrecision::Double);
  Mat approx;
  {
    const GemmPrecisionScope scope(GemmPrecision::Single);
    EXPECT_EQ(gemm_precision(), GemmPrecision::Single);
    approx = conv.forward(in).x;
  }
  EXPECT_EQ(gemm_precision(), GemmPrecision::Double);
  EXPECT_LT((exact - approx).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_GT((exact - approx).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Layers, LinearGradients) {
  ParamStore ps;
  Rng rng(6);
  Linear lin(ps, "l", 4, 3, rng);
  randomise(ps, rng);
  const double err = gradient_error(
      ps, random_mat(4, 5, rng), [&](const Mat& x) { return lin.forward(x); },
      [&](const Mat& r) { return lin.backward(r); }, rng);
  EXPECT_LT(err, 1e-6);
}

TEST(Layers, GroupNormGradientsAndNegativeControl) {
  ParamStore ps;
  Rng rng(7);
  GroupNorm gn(ps, "g", 8);
  randomise(ps, rng);
  const Shape s{2, 3, 3};
  const Mat x = random_mat(8, s.cols(), rng);
  auto fwd = [&](const Mat& in) { return gn.forward({in, s}).x; };
  auto bwd = [&](const Mat& r) { return gn.backward({r, s}).x; };
  EXPECT_LT(gradient_error(ps, x, fwd, bwd, rng), 1e-6);
  detail::set_groupnorm_sabotage(true);
  const double sabotaged = gradient_error(ps, x, fwd, bwd, rng);
  detail::set_groupnorm_sabotage(false);
  EXPECT_GT(sabotaged, 1e-2);
}

TEST(Layers, GroupNormNormalises) {
  ParamStore ps;
  Rng rng(8);
  GroupNorm gn(ps, "g", 4);  // unit scale, zero shift at construction
  const Act out = gn.forward({random_mat(4, 2 * 25, rng) * 3.0, {2, 5, 5}});
  for (int b = 0; b < 2; ++b) {
    const auto block = out.x.middleCols(b * 25, 25);
    for (int c = 0; c < 4; ++c) {
      EXPECT_NEAR(block.row(c).mean(), 0.0, 1e-12);
    }
  }
}

TEST(Layers, SiluGradientAndValues) {
  SiLU act;
  Rng rng(9);
  const Mat x = random_mat(3, 7, rng) * 3.0;
  const Mat y = act.forward(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_NEAR(y(i), x(i) / (1 + std::exp(-x(i))), 1e-15);
  ParamStore none;
  EXPECT_LT(gradient_error(none, x, [&](const Mat& in) { return act.forward(in); },
                           [&](const Mat& r) { return act.backward(r); }, rng),
            1e-6);
}

TEST(Layers, DropoutModes) {
  Rng rng(10);
  Dropout d(0.5);
  const Mat x = Mat::Ones(10, 100);
  EXPECT_EQ(d.forward(x, false, nullptr), x);
  EXPECT_THROW(d.forward(x, true, nullptr), ConfigError);
  const Mat y = d.forward(x, true, &rng);
  int kept = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    EXPECT_TRUE(y(i) == 0.0 || y(i) == 2.0);
    kept += y(i) != 0.0;
  }
  EXPECT_GT(kept, 400);
  EXPECT_LT(kept, 600);
  EXPECT_EQ(d.backward(x), y);
}

TEST(Layers, UpsampleAndConcat) {
  Rng rng(11);
  const Act in{random_mat(2, 2 * 2 * 3, rng), {2, 2, 3}};
  const Act up = upsample2x(in);
  EXPECT_EQ(up.s, (Shape{2, 4, 6}));
  EXPECT_EQ(up.x(1, (1 * 4 + 3) * 6 + 5), in.x(1, (1 * 2 + 1) * 3 + 2));
  ParamStore none;
  EXPECT_LT(gradient_error(none, in.x, [&](const Mat& x) { return upsample2x({x, in.s}).x; },
                           [&](const Mat& r) { return upsample2x_backward({r, up.s}, in.s).x; }, rng),
            1e-6);
  const Act c = concat_channels(in, in);
  EXPECT_EQ(c.c(), 4);
  EXPECT_EQ(c.x.bottomRows(2), in.x);
}

TEST(Layers, TimeEmbeddingDistinctAndGradients) {
  const Mat f = TimeEmbedding::sinusoid({1, 2, 3, 200}, 8);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) EXPECT_GT((f.col(a) - f.col(b)).norm(), 1e-3);
  }
  ParamStore ps;
  Rng rng(12);
  TimeEmbedding te(ps, "t", 8, 16, rng);
  const Mat e = te.forward({5, 7});
  EXPECT_EQ(e.rows(), 16);
  EXPECT_EQ(e.cols(), 2);
  EXPECT_EQ(te.forward({5, 7}), e);
  // Gradient check on the projection parameters (the steps are integers).
  const Mat r = random_mat(16, 2, rng);
  ps.zero_grad();
  te.forward({5, 7});
  te.backward(r);
  const Eigen::VectorXd g = ps.flat_grads();
  Eigen::VectorXd p = ps.flat_values();
  double worst = 0;
  for (Eigen::Index i = 0; i < p.size(); i += 3) {
    const double keep = p[i];
    p[i] = keep + 1e-5;
    ps.set_flat_values(p);
    const double up = te.forward({5, 7}).cwiseProduct(r).sum();
    p[i] = keep - 1e-5;
    ps.set_flat_values(p);
    const double down = te.forward({5, 7}).cwiseProduct(r).sum();
    p[i] = keep;
    ps.set_flat_values(p);
    const double n = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(n - g[i]) / std::max({std::abs(n), std::abs(g[i]), 1e-3}));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Layers, ResBlockGradients) {
  for (int cout : {4, 6}) {
    ParamStore ps;
    Rng rng(13);
    ResBlock block(ps, "r", 4, cout, 0, 0.0, rng);
    randomise(ps, rng, 0.3);
    const Shape s{2, 2, 3};
    const double err = gradient_error(
        ps, random_mat(4, s.cols(), rng),
        [&](const Mat& x) { return block.forward({x, s}, nullptr, false, nullptr).x; },
        [&](const Mat& r) { return block.backward({r, s}, nullptr).x; }, rng);
    EXPECT_LT(err, 1e-5) << cout;
  }
}

TEST(Attention, SingleTokenAndUniformLimbs) {
  Rng rng(14);
  const Mat v = random_mat(1, 4, rng);
  const Mat wo = random_mat(4, 4, rng);
  const Mat out = cross_attention(v, v, v, 2, &wo);
  EXPECT_LT((out - v * wo.transpose()).cwiseAbs().maxCoeff(), 1e-14);

  Mat q = Mat::Zero(3, 4);
  const Mat k = random_mat(5, 4, rng), vals = random_mat(5, 4, rng);
  const Mat u = cross_attention(q, k, vals, 1);
  for (Eigen::Index r = 0; r < 3; ++r) {
    EXPECT_LT((u.row(r) - vals.colwise().mean()).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(cross_attention(q, k, vals, 3), ShapeError);
}

TEST(Attention, MatchesDenseOracle) {
  Rng rng(15);
  for (int heads : {1, 2, 4}) {
    const Mat q = random_mat(4, 8, rng), k = random_mat(6, 8, rng), v = random_mat(6, 8, rng);
    const Mat wo = random_mat(8, 8, rng);
    const Eigen::VectorXd bo = Eigen::VectorXd::Random(8);
    const Mat got = cross_attention(q, k, v, heads, &wo, &bo);
    const Mat want = oracle::dense_attention(q, k, v, heads, &wo, &bo);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << heads;
  }
  const Mat q = random_mat(4, 8, rng), k = random_mat(4, 8, rng), v = random_mat(4, 8, rng);
  EXPECT_LT((cross_attention(q, k, v, 1) - oracle::dense_attention(q, k, v, 1, nullptr, nullptr))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(Attention, WeightsAreStochastic) {
  Rng rng(16);
  const Mat w = attention_weights(random_mat(4, 7, rng) * 4.0, random_mat(4, 9, rng) * 4.0);
  EXPECT_EQ(w.rows(), 9);
  for (Eigen::Index j = 0; j < w.cols(); ++j) EXPECT_NEAR(w.col(j).sum(), 1.0, 1e-12);
  EXPECT_GE(w.minCoeff(), 0.0);
}

TEST(Attention, SelfAttentionProperties) {
  Rng rng(17);
  const Mat x = random_mat(5, 4, rng);
  const Mat wo = random_mat(4, 4, rng);
  const Mat y = self_attention(x, 2, &wo);
  EXPECT_LT((y - x - cross_attention(x, x, x, 2, &wo)).cwiseAbs().maxCoeff(), 1e-15);

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Mat px = perm * x;
  EXPECT_LT((self_attention(px, 2, &wo) - perm * y).cwiseAbs().maxCoeff(), 1e-13);

  const Mat one = random_mat(1, 4, rng);
  EXPECT_LT((self_attention(one, 2, &wo) - (one + one * wo.transpose())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Attention, BlockGradientsSelfAndCross) {
  for (bool cross : {false, true}) {
    ParamStore ps;
    Rng rng(18);
    AttentionBlock block(ps, "a", 4, 6, 2, cross, rng);
    randomise(ps, rng, 0.4);
    const Shape s{2, 2, 2}, cs{2, 3, 1};
    const Mat ctx = random_mat(6, cs.cols(), rng);
    const double err = gradient_error(
        ps, random_mat(4, s.cols(), rng),
        [&](const Mat& x) {
          const Act c{ctx, cs};
          return block.forward({x, s}, cross ? &c : nullptr).x;
        },
        [&](const Mat& r) {
          Act dctx{Mat::Zero(6, cs.cols()), cs};
          return block.backward({r, s}, cross ? &dctx : nullptr).x;
        },
        rng);
    EXPECT_LT(err, 1e-5) << cross;
  }
}

TEST(Attention, ContextGradient) {
  ParamStore ps;
  Rng rng(19);
  AttentionBlock block(ps, "a", 4, 6, 2, true, rng);
  randomise(ps, rng, 0.4);
  const Shape s{1, 2, 2}, cs{1, 3, 1};
  const Act x{random_mat(4, s.cols(), rng), s};
  Mat ctx = random_mat(6, cs.cols(), rng);
  const Mat r = random_mat(4, s.cols(), rng);
  Act c0{ctx, cs};
  block.forward(x, &c0);
  Act dctx{Mat::Zero(6, cs.cols()), cs};
  block.backward({r, s}, &dctx);
  for (Eigen::Index i = 0; i < ctx.size(); ++i) {
    const double keep = ctx(i);
    ctx(i) = keep + 1e-5;
    Act cu{ctx, cs};
    const double up = block.forward(x, &cu).x.cwiseProduct(r).sum();
    ctx(i) = keep - 1e-5;
    Act cd{ctx, cs};
    const double down = block.forward(x, &cd).x.cwiseProduct(r).sum();
    ctx(i) = keep;
    EXPECT_NEAR(dctx.x(i), (up - down) / 2e-5, 1e-7);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 0.5), m = Eigen::VectorXd::Zero(3),
                  v = Eigen::VectorXd::Zero(3);
  adam_update(w, Eigen::VectorXd::Zero(3), m, v, 1, {});
  EXPECT_EQ(w, Eigen::VectorXd::Constant(3, 0.5));
}

TEST(Adam, FirstStepMovesBySignedLr) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(3), m = w, v = w, g(3);
  g << 2.0, -0.01, 30.0;
  AdamOptions opt;
  opt.lr = 0.1;
  adam_update(w, g, m, v, 1, opt);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w[i], -0.1 * (g[i] > 0 ? 1 : -1), 1e-6);
}

TEST(Adam, QuadraticBowlConverges) {
  ParamStore ps;
  const int id = ps.add("w", {4});
  ps.block(id).value << 1.0, -2.0, 0.5, 3.0;
  AdamOptions opt;
  opt.lr = 1e-2;
  Adam adam(ps, opt);
  std::vector<double> norms;
  for (int step = 0; step < 200; ++step) {
    ps.block(id).grad = 2.0 * ps.block(id).value;
    adam.step();
    norms.push_back(ps.block(id).value.norm());
  }
  EXPECT_EQ(adam.steps(), 200);
  for (std::size_t i = 10; i < norms.size(); ++i) EXPECT_LT(norms[i], norms[i - 1]);
  EXPECT_LT(norms.back(), norms.front());
}
