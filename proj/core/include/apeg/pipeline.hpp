#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "apeg/auth.hpp"
#include "apeg/channel_sim.hpp"
#include "apeg/config.hpp"
#include "apeg/fingerprint.hpp"
#include "apeg/nn/unet.hpp"
#include "apeg/tensor.hpp"

namespace apeg::pipeline {

// Fingerprint source for Alice: the two generators, Jack's estimate used
// as-is (CA), or the noiseless channel (oracle).
enum class Model { Ccmdm, Cadm, Ca, Oracle };
inline constexpr Model kAllModels[] = {Model::Ccmdm, Model::Cadm, Model::Ca, Model::Oracle};

const char* model_name(Model m);
Model parse_model(const std::string& s);
bool is_learned(Model m);
nn::Variant to_variant(Model m);  // throws ConfigError for CA and oracle

// Output layout under RunConfig::out_dir.
struct Paths {
  std::filesystem::path root;
  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path train_data() const { return data_dir() / "train.apeg"; }
  std::filesystem::path test_data() const { return data_dir() / "test.apeg"; }
  std::filesystem::path stream() const { return data_dir() / "stream.csv"; }
  std::filesystem::path model_dir(Model m) const { return root / model_name(m); }
  std::filesystem::path checkpoint(Model m) const { return model_dir(m) / "checkpoint.apeg"; }
  std::filesystem::path loss_csv(Model m) const { return model_dir(m) / "loss.csv"; }
  std::filesystem::path generated(Model m) const { return model_dir(m) / "generated.apeg"; }
  std::filesystem::path quality_csv(Model m) const { return model_dir(m) / "quality.csv"; }
  std::filesystem::path quality_cdf(Model m) const { return model_dir(m) / "quality_cdf.csv"; }
  std::filesystem::path decisions_csv(Model m) const { return model_dir(m) / "decisions.csv"; }
  std::filesystem::path scores_csv(Model m) const { return model_dir(m) / "scores.csv"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path report_csv() const { return eval_dir() / "report.csv"; }
  std::filesystem::path cdf_csv() const { return eval_dir() / "cdf.csv"; }
};

// ------------------------------------------------------------ building blocks

struct Split {
  std::vector<channel::ChannelSample> train;
  std::vector<channel::ChannelSample> test;
};

// Simulates cfg.num_samples slots at `snr_db` and splits them. The channel
// geometry depends only on the seed, so every SNR sees the same slots.
Split make_split(const config::RunConfig& cfg, double snr_db);

// Normalisation fitted on the Alice and Jack estimates of the train split.
fp::NormStats fit_train_norm(const config::RunConfig& cfg,
                             const std::vector<channel::ChannelSample>& train);

// Alice/Eve labels of the test stream, round(k * window) Alice per window.
std::vector<auth::Label> stream_labels(const config::RunConfig& cfg, std::size_t count);

// Received estimate per stream position: Alice's when labelled Alice, the
// slot's Eve otherwise.
std::vector<channel::ChannelMatrix> received_stream(const std::vector<channel::ChannelSample>& test,
                                                    const std::vector<auth::Label>& labels);

std::vector<channel::ChannelMatrix> alice_estimates(const std::vector<channel::ChannelSample>& s);
std::vector<channel::ChannelMatrix> jack_estimates(const std::vector<channel::ChannelSample>& s);

// Trains a fresh network; returns per-epoch and per-step losses.
struct TrainResult {
  std::vector<double> losses;
  std::vector<double> batch_losses;
  double validation_loss = 0.0;
};
TrainResult train_network(const config::RunConfig& cfg, nn::Variant v, nn::UNet& net,
                          const fp::NormStats& norm,
                          const std::vector<channel::ChannelSample>& train,
                          const std::vector<channel::ChannelSample>& validation,
                          std::ostream* log);

nn::NetConfig net_config_for(const config::RunConfig& cfg, nn::Variant v);

// Generated Alice images (N, 2, M, K) for each test slot. `net` is required
// for the learned models and ignored otherwise.
Tensor generate_images(Model m, const config::RunConfig& cfg, const nn::ScheduleParams& schedule,
                       nn::NoisePredictor* net, const fp::NormStats& norm,
                       const std::vector<channel::ChannelSample>& test, Rng& rng);

struct QualityRow {
  double ssim = 0, psnr = 0, cosine = 0, nmse_db = 0;
};
// Generated vs. received Alice estimate, per sample.
std::vector<QualityRow> quality(const Tensor& generated, const Tensor& alice);

struct AuthResult {
  auth::MetricKind metric{};
  std::vector<auth::Decision> decisions;
  auth::Score score;
};
// Decisions over the stream, one round per window (0 = whole stream).
AuthResult authenticate(auth::MetricKind metric, const Tensor& generated, const Tensor& received,
                        const std::vector<auth::Label>& labels, double k, int window);

// Empirical CDF: sorted values with cumulative probability i / n.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values);

double median(std::vector<double> values);

// ------------------------------------------------------------ commands

struct GenDataSummary {
  std::size_t train = 0, test = 0, alice_in_stream = 0, eve_in_stream = 0;
};
GenDataSummary cmd_gen_data(const config::RunConfig& cfg, std::ostream& log);

TrainResult cmd_train(const config::RunConfig& cfg, Model m, std::ostream& log);

std::vector<QualityRow> cmd_generate(const config::RunConfig& cfg, Model m, std::ostream& log);

std::vector<AuthResult> cmd_auth(const config::RunConfig& cfg, Model m, std::ostream& log);

struct ReportRow {
  double snr_db = 0;
  auth::MetricKind metric{};
  Model model{};
  double f1 = 0, error_rate = 0;
  QualityRow mean_quality;
};
std::vector<ReportRow> cmd_eval(const config::RunConfig& cfg, std::ostream& log);

}  // namespace apeg::pipeline
