#include <gtest/gtest.h>

#include "apeg/errors.hpp"
#include "apeg/training.hpp"

using namespace apeg;
using namespace apeg::diffusion;

namespace {

nn::NetConfig tiny(nn::Variant v) {
  nn::NetConfig c;
  c.base_channels = 4;
  c.channel_mults = {1, 2};
  c.self_attn = {false, true};
  c.cross_attn_levels = {false, true};
  c.heads = 2;
  c.cross_attn = v == nn::Variant::Cadm;
  return c;
}

// Alice is a fixed linear image of Jack.
PairData linear_pairs(int n, Rng& rng) {
  PairData d{Tensor(n, 2, 2, 4), Tensor(n, 2, 2, 4)};
  for (std::size_t i = 0; i < d.jack.size(); ++i) {
    d.jack[i] = rng.uniform(-1, 1);
    d.alice[i] = 0.8 * d.jack[i];
  }
  return d;
}

}  // namespace

TEST(MovingAverage, TrailingWindow) {
  const std::vector<double> xs{4, 2, 6, 8, 10};
  const std::vector<double> ma = moving_average(xs, 2);
  const std::vector<double> want{4, 3, 4, 7, 9};
  EXPECT_EQ(ma, want);
  EXPECT_EQ(moving_average(xs, 1), xs);
  EXPECT_THROW(moving_average(xs, 0), ConfigError);
  const std::vector<double> wide = moving_average(xs, 20);
  EXPECT_DOUBLE_EQ(wide.back(), 6.0);
}

TEST(SettleIndex, FirstEntryWithinTolerance) {
  EXPECT_EQ(settle_index({10, 5, 1.2, 1.05, 1.0}, 0.1), 3);
  EXPECT_EQ(settle_index({1.0}, 0.1), 0);
  EXPECT_EQ(settle_index({0.5, 3, 1}, 0.1), 0);
  EXPECT_THROW(settle_index({}, 0.1), ConfigError);
}

TEST(PairData, Slice) {
  Rng rng(1);
  const PairData d = linear_pairs(5, rng);
  const PairData s = d.slice(1, 3);
  EXPECT_EQ(s.size(), 3);
  EXPECT_EQ(s.alice.sample(0), d.alice.sample(1));
  EXPECT_EQ(s.jack.sample(2), d.jack.sample(3));
}

TEST(Training, LossFallsOnLinearMapping) {
  for (nn::Variant v : {nn::Variant::Ccmdm, nn::Variant::Cadm}) {
    Rng rng(2);
    const PairData data = linear_pairs(64, rng);
    Rng init(3);
    nn::UNet net(tiny(v), init);
    const NoiseSchedule s = make_schedule(20, 1e-3, 0.2);
    TrainOptions opt;
    opt.epochs = 30;
    opt.batch = 16;
    opt.lr = 3e-3;
    opt.seed = 4;
    std::vector<double> batches;
    int epochs_seen = 0;
    opt.on_batch = [&](int step, double loss) {
      EXPECT_EQ(step, static_cast<int>(batches.size()));
      batches.push_back(loss);
    };
    opt.on_epoch = [&](int, double) { ++epochs_seen; };
    const std::vector<double> losses = train_model(v, net, s, data, opt);
    ASSERT_EQ(losses.size(), 30u);
    EXPECT_EQ(epochs_seen, 30);
    EXPECT_EQ(batches.size(), 30u * 4);
    const std::vector<double> ma = moving_average(losses, 20);
    EXPECT_LE(ma.back(), ma.front()) << nn::variant_name(v);
    EXPECT_LT(losses.back(), 0.7 * losses.front()) << nn::variant_name(v);
  }
}

TEST(Training, DeterministicUnderSeed) {
  Rng rng(5);
  const PairData data = linear_pairs(20, rng);
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.2);
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch = 8;
  opt.seed = 6;
  std::vector<double> a, b;
  {
    Rng init(7);
    nn::UNet net(tiny(nn::Variant::Cadm), init);
    a = train_model(nn::Variant::Cadm, net, s, data, opt);
  }
  {
    Rng init(7);
    nn::UNet net(tiny(nn::Variant::Cadm), init);
    b = train_model(nn::Variant::Cadm, net, s, data, opt);
  }
  EXPECT_EQ(a, b);
}

TEST(Training, RejectsBadInput) {
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.2);
  Rng init(1);
  nn::UNet net(tiny(nn::Variant::Ccmdm), init);
  TrainOptions opt;
  EXPECT_THROW(train_model(nn::Variant::Ccmdm, net, s, {}, opt), DataError);
  Rng rng(2);
  const PairData data = linear_pairs(4, rng);
  opt.batch = 0;
  EXPECT_THROW(train_model(nn::Variant::Ccmdm, net, s, data, opt), ConfigError);
  nn::OracleNoisePredictor oracle;
  opt.batch = 2;
  EXPECT_THROW(train_model(nn::Variant::Ccmdm, oracle, s, data, opt), ConfigError);
}

TEST(Training, OracleBatchLossIsZero) {
  Rng rng(3);
  const PairData data = linear_pairs(6, rng);
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.2);
  nn::OracleNoisePredictor oracle;
  for (nn::Variant v : {nn::Variant::Ccmdm, nn::Variant::Cadm}) {
    EXPECT_EQ(batch_loss(v, data, rng, s, oracle, {false, false}).loss, 0.0);
    EXPECT_EQ(validation_loss(v, oracle, s, data, 1, 4), 0.0);
  }
}

TEST(Training, ZeroLossMeansZeroGradient) {
  // A network whose output layer is zero predicts 0; with targets of zero
  // noise the residual vanishes, so must every gradient.
  Rng init(4);
  nn::UNet net(tiny(nn::Variant::Cadm), init);
  const Tensor x(2, 2, 2, 4, 0.3);
  net.params()->zero_grad();
  const Tensor y = net.forward(x, {2, 3}, &x, true);
  EXPECT_EQ(y.vec().cwiseAbs().maxCoeff(), 0.0);
  net.backward(Tensor(2, 2, 2, 4));
  EXPECT_EQ(net.params()->flat_grads().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Generate, ChunkingDoesNotChangeShape) {
  Rng init(8);
  nn::UNet net(tiny(nn::Variant::Cadm), init);
  const NoiseSchedule s = make_schedule(5, 1e-3, 0.2);
  Rng rng(9);
  const PairData data = linear_pairs(5, rng);
  Rng a(10), b(10);
  const Tensor g1 = generate(nn::Variant::Cadm, net, s, data.jack, a, NoiseScaling::Sqrt, 2);
  const Tensor g2 = generate(nn::Variant::Cadm, net, s, data.jack, b, NoiseScaling::Sqrt, 2);
  EXPECT_TRUE(g1.same_shape(data.jack));
  EXPECT_EQ(g1, g2);
  EXPECT_THROW(generate(nn::Variant::Cadm, net, s, data.jack, a, NoiseScaling::Sqrt, 0), ConfigError);
}
