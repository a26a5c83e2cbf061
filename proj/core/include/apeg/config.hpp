#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apeg/auth.hpp"
#include "apeg/channel_sim.hpp"
#include "apeg/diffusion.hpp"
#include "apeg/fingerprint.hpp"
#include "apeg/nn/checkpoint.hpp"
#include "apeg/nn/unet.hpp"

namespace apeg::config {

enum class Preset { Desk, Paper };
enum class SplitMode { Time, Random };

const char* preset_name(Preset p);
Preset parse_preset(const std::string& s);

struct RunConfig {
  Preset preset = Preset::Desk;
  std::uint64_t seed = 2024;
  std::string out_dir = "apeg_out";

  channel::Scenario scenario;
  channel::ArrayConfig array;

  // Data set and split.
  int num_samples = 2000;
  double train_fraction = 0.9;
  SplitMode split = SplitMode::Time;
  double data_snr_db = 20.0;
  fp::NormPolicy norm = fp::NormPolicy::Joint;

  // Diffusion and network. `net.cross_attn` is set per variant at train time.
  nn::ScheduleParams schedule;
  diffusion::NoiseScaling noise_scaling = diffusion::NoiseScaling::Sqrt;
  nn::NetConfig net;

  // Training.
  int epochs = 40;
  int batch = 32;
  double lr = 2e-3;

  // Sampling and authentication.
  int sample_batch = 100;
  std::vector<auth::MetricKind> metrics{auth::kAllMetrics.begin(), auth::kAllMetrics.end()};
  int auth_window = 0;  // 0: one round over the whole stream
  std::vector<double> snr_list{5.0, 10.0, 15.0, 20.0};

  double attack_ratio() const { return scenario.attack_ratio; }
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig preset_config(Preset p);

// Flat `key = value` text; `#` starts a comment. Defaults come from the
// preset named in the text (or `preset_override` when given), then every
// listed key overrides its field. Unknown or repeated keys are errors.
RunConfig parse_config(std::string_view text, std::optional<Preset> preset_override = {});
RunConfig load_config(const std::filesystem::path& path,
                      std::optional<Preset> preset_override = {});

// Every key, one per line, in a fixed order. parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& c);

// Key names in serialisation order.
std::vector<std::string> config_keys();

}  // namespace apeg::config
