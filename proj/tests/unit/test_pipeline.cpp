#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "apeg/dataset_io.hpp"
#include "apeg/errors.hpp"
#include "apeg/nn/checkpoint.hpp"
#include "apeg/pipeline.hpp"
#include "apeg/training.hpp"
#include "support/temp_dir.hpp"

namespace apeg::pipeline {
namespace {

using config::RunConfig;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig tiny(const std::filesystem::path& out) {
  std::ostringstream s;
  s << "preset = desk\n"
    << "num_samples = 60\n"
    << "diffusion.steps = 4\n"
    << "net.base_channels = 4\n"
    << "net.heads = 2\n"
    << "train.epochs = 1\n"
    << "train.batch = 16\n"
    << "auth.snr_list = 20\n"
    << "out_dir = " << out.string() << "\n";
  return config::parse_config(s.str());
}

class PipelineTest : public ::testing::Test {
 protected:
  test::TempDir dir;
  RunConfig cfg = tiny(dir.path() / "out");
  Paths paths{cfg.out_dir};
  std::ostringstream log;
};

TEST_F(PipelineTest, GenDataWritesSplitsAndBalancedStream) {
  const auto s = cmd_gen_data(cfg, log);
  EXPECT_EQ(s.train, 54u);
  EXPECT_EQ(s.test, 6u);
  EXPECT_EQ(s.alice_in_stream, 3u);
  EXPECT_EQ(s.eve_in_stream, 3u);
  EXPECT_TRUE(std::filesystem::exists(paths.train_data()));
  EXPECT_TRUE(std::filesystem::exists(paths.test_data()));
  EXPECT_TRUE(std::filesystem::exists(paths.stream()));
}

TEST_F(PipelineTest, GenDataIsByteDeterministic) {
  cmd_gen_data(cfg, log);
  const std::string train = slurp(paths.train_data());
  const std::string test = slurp(paths.test_data());
  const std::string stream = slurp(paths.stream());
  std::filesystem::remove_all(paths.root);
  cmd_gen_data(cfg, log);
  EXPECT_EQ(slurp(paths.train_data()), train);
  EXPECT_EQ(slurp(paths.test_data()), test);
  EXPECT_EQ(slurp(paths.stream()), stream);
}

TEST_F(PipelineTest, SeedChangesData) {
  cmd_gen_data(cfg, log);
  const std::string a = slurp(paths.test_data());
  RunConfig other = cfg;
  other.seed += 1;
  other.scenario.rng_seed = other.seed;
  other.out_dir = (dir / "other").string();
  cmd_gen_data(other, log);
  EXPECT_NE(slurp(Paths{other.out_dir}.test_data()), a);
}

TEST(PipelineSplit, PaperSizeSplitsNineToOne) {
  RunConfig c = config::preset_config(config::Preset::Paper);
  c.num_samples = 12000;
  const Split s = make_split(c, c.data_snr_db);
  EXPECT_EQ(s.train.size(), 10800u);
  EXPECT_EQ(s.test.size(), 1200u);
}

TEST(PipelineSplit, GeometryIsSharedAcrossSnr) {
  RunConfig c = tiny("unused");
  const Split a = make_split(c, 0.0);
  const Split b = make_split(c, 20.0);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    EXPECT_EQ(a.test[i].time_slot, b.test[i].time_slot);
    ASSERT_TRUE(a.test[i].true_alice && b.test[i].true_alice);
    EXPECT_TRUE(a.test[i].true_alice->isApprox(*b.test[i].true_alice, 0.0));
  }
}

TEST(PipelineStream, LabelsFollowAttackRatio) {
  RunConfig c = tiny("unused");
  for (double k : {0.0, 0.25, 0.5, 1.0}) {
    c.scenario.attack_ratio = k;
    const auto labels = stream_labels(c, 200);
    ASSERT_EQ(labels.size(), 200u);
    const auto alice = std::count(labels.begin(), labels.end(), auth::Label::Alice);
    EXPECT_EQ(alice, static_cast<long>(std::lround(k * 200))) << k;
  }
}

TEST(PipelineStream, ReceivedPicksAliceOrEve) {
  RunConfig c = tiny("unused");
  const Split s = make_split(c, c.data_snr_db);
  const auto labels = stream_labels(c, s.test.size());
  const auto rec = received_stream(s.test, labels);
  ASSERT_EQ(rec.size(), s.test.size());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const auto& want = labels[i] == auth::Label::Alice ? s.test[i].alice_est : s.test[i].eve_ests.front();
    EXPECT_TRUE(rec[i].isApprox(want, 0.0)) << i;
  }
}

TEST(PipelineStats, EmpiricalCdfAndMedian) {
  const auto cdf = empirical_cdf({3.0, 1.0, 2.0, 2.0});
  ASSERT_EQ(cdf.size(), 4u);
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    EXPECT_DOUBLE_EQ(cdf[i].second, static_cast<double>(i + 1) / 4.0);
    if (i > 0) {
      EXPECT_LE(cdf[i - 1].first, cdf[i].first);
    }
  }
  EXPECT_DOUBLE_EQ(cdf.front().first, 1.0);
  EXPECT_DOUBLE_EQ(cdf.back().first, 3.0);
  EXPECT_DOUBLE_EQ(median({5.0, 1.0, 3.0}), 3.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), DataError);
}

TEST_F(PipelineTest, CommandsNeedTheirInputs) {
  EXPECT_THROW(cmd_train(cfg, Model::Ccmdm, log), DataError);
  cmd_gen_data(cfg, log);
  EXPECT_THROW(cmd_train(cfg, Model::Ca, log), ConfigError);
  EXPECT_THROW(cmd_generate(cfg, Model::Cadm, log), CheckpointError);
  EXPECT_THROW(cmd_auth(cfg, Model::Ca, log), DataError);
  EXPECT_THROW(cmd_eval(cfg, log), CheckpointError);
}

TEST_F(PipelineTest, OracleTrainingHasZeroLoss) {
  cmd_gen_data(cfg, log);
  const auto r = cmd_train(cfg, Model::Oracle, log);
  ASSERT_EQ(r.losses.size(), 2u);
  EXPECT_EQ(r.losses[0], 0.0);
  EXPECT_EQ(r.losses[1], 0.0);
}

TEST_F(PipelineTest, CheckpointReloadReproducesValidationLoss) {
  cmd_gen_data(cfg, log);
  for (Model m : {Model::Ccmdm, Model::Cadm}) {
    const auto r = cmd_train(cfg, m, log);
    EXPECT_EQ(r.losses.size(), static_cast<std::size_t>(cfg.epochs));
    EXPECT_TRUE(std::filesystem::exists(paths.loss_csv(m)));

    const nn::Checkpoint ck = nn::load_checkpoint(paths.checkpoint(m));
    EXPECT_EQ(ck.variant, to_variant(m));
    Rng init(99);
    nn::UNet net(ck.net, init);
    nn::apply_checkpoint(ck, *net.params());

    const auto test = io::load_external_dataset(paths.test_data(), &cfg.array).samples;
    const auto norm = fp::norm_from_json(io::read_sidecar(paths.train_data()).at("norm"));
    const diffusion::PairData val{fp::to_images(alice_estimates(test), norm),
                                  fp::to_images(jack_estimates(test), norm)};
    const auto v = to_variant(m);
    const double reloaded = diffusion::validation_loss(
        v, net, diffusion::make_schedule(ck.schedule.steps, ck.schedule.beta_start, ck.schedule.beta_end),
        val, Rng(cfg.seed).fork("validation", static_cast<std::uint64_t>(v)).next_u64(), cfg.batch);
    EXPECT_EQ(reloaded, r.validation_loss) << model_name(m);
  }
}

TEST_F(PipelineTest, CaGeneratesJackAndOracleIsExact) {
  cmd_gen_data(cfg, log);
  cmd_generate(cfg, Model::Ca, log);
  cmd_generate(cfg, Model::Oracle, log);
  const auto test = io::load_external_dataset(paths.test_data(), &cfg.array).samples;
  const auto ca = io::load_external_dataset(paths.generated(Model::Ca), &cfg.array).samples;
  ASSERT_EQ(ca.size(), test.size());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    // Stored at single precision after a normalisation round trip.
    EXPECT_LT((ca[i].alice_est - test[i].jack_est).cwiseAbs().maxCoeff(), 1e-5);
  }
  const auto oracle = io::load_external_dataset(paths.generated(Model::Oracle), &cfg.array).samples;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    EXPECT_LT((oracle[i].alice_est - *test[i].true_alice).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST_F(PipelineTest, LearnedGenerationIsDeterministic) {
  cmd_gen_data(cfg, log);
  cmd_train(cfg, Model::Ccmdm, log);
  cmd_generate(cfg, Model::Ccmdm, log);
  const std::string first = slurp(paths.generated(Model::Ccmdm));
  cmd_generate(cfg, Model::Ccmdm, log);
  EXPECT_EQ(slurp(paths.generated(Model::Ccmdm)), first);
}

TEST_F(PipelineTest, AuthAcceptsRoundKPerMetric) {
  cmd_gen_data(cfg, log);
  cmd_generate(cfg, Model::Oracle, log);
  const auto results = cmd_auth(cfg, Model::Oracle, log);
  ASSERT_EQ(results.size(), cfg.metrics.size());
  for (const auto& r : results) {
    ASSERT_EQ(r.decisions.size(), 6u);
    const auto accepted = std::count_if(r.decisions.begin(), r.decisions.end(),
                                        [](const auth::Decision& d) { return d.accepted; });
    EXPECT_EQ(accepted, 3);
  }
}

TEST_F(PipelineTest, AllEveStreamAcceptsNothing) {
  cfg.scenario.attack_ratio = 0.0;
  const auto s = cmd_gen_data(cfg, log);
  EXPECT_EQ(s.alice_in_stream, 0u);
  cmd_generate(cfg, Model::Ca, log);
  for (const auto& r : cmd_auth(cfg, Model::Ca, log)) {
    for (const auto& d : r.decisions) EXPECT_FALSE(d.accepted);
    EXPECT_EQ(r.score.counts.tp + r.score.counts.fp, 0);
    EXPECT_EQ(r.score.f1, 0.0);
  }
}

TEST_F(PipelineTest, EvalCoversEverySnrMetricAndModel) {
  cfg.snr_list = {0.0, 20.0};
  cmd_gen_data(cfg, log);
  cmd_train(cfg, Model::Ccmdm, log);
  cmd_train(cfg, Model::Cadm, log);
  const auto rows = cmd_eval(cfg, log);
  EXPECT_EQ(rows.size(), cfg.snr_list.size() * cfg.metrics.size() * 4);
  EXPECT_TRUE(std::filesystem::exists(paths.report_csv()));
  EXPECT_TRUE(std::filesystem::exists(paths.cdf_csv()));
  for (const auto& r : rows) {
    EXPECT_GE(r.f1, 0.0);
    EXPECT_LE(r.f1, 1.0);
    if (r.model == Model::Oracle) {
      EXPECT_GT(r.mean_quality.cosine, 0.0);
    }
  }
}

}  // namespace
}  // namespace apeg::pipeline
