#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "apeg/rng.hpp"

namespace apeg::channel {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr int kMaxPaths = 5;

using Vec3 = Eigen::Vector3d;

// Complex M x K frequency response: one row per transmit antenna, one column
// per OFDM subcarrier.
using ChannelMatrix = Eigen::MatrixXcd;

struct ArrayConfig {
  int tx_antennas = 8;  // M, the flattened 1x2x4 transmit array
  int rx_antennas = 8;  // N, kept for completeness; not part of the image
  int subcarriers = 32;  // K
  double carrier_hz = 28e9;
  double bandwidth_hz = 50e6;
  double element_spacing = 0.5;  // wavelengths

  double wavelength() const { return kSpeedOfLight / carrier_hz; }
  void validate() const;
  bool operator==(const ArrayConfig&) const = default;
};

// One propagation path. The delay is measured in sample intervals
// (1 / bandwidth) and the carrier rotation is already folded into `phase`.
// `slope` is the per-antenna phase progression of the ULA steering vector.
struct Path {
  double gain = 1.0;
  double delay = 0.0;
  double phase = 0.0;
  double slope = 0.0;

  bool operator==(const Path&) const = default;
};

using PathSet = std::vector<Path>;

void validate_paths(const PathSet& paths);

struct Scenario {
  Vec3 alice_pos{23.5, 266.93, 0.0};
  Vec3 jack_pos{23.5, 266.73, 0.0};
  Vec3 bob_pos{0.0, 0.0, 4.0};
  double eve_radius = 5.0;
  int num_eves = 5;
  double attack_ratio = 0.5;  // k
  Vec3 velocity{1.0, 0.0, 0.0};
  std::uint64_t rng_seed = 2024;

  // Synthetic environment.
  int num_paths = kMaxPaths;
  double slot_seconds = 0.01;
  // Collaborator offsets per wavelength of Alice-Jack displacement.
  double delay_offset_per_wavelength = 0.025;   // sample intervals
  double phase_offset_per_wavelength = 0.003;   // radians
  // Per-slot drift of the shared scatterers (mean-reverting).
  double drift_memory = 0.95;
  double delay_drift_std = 0.05;
  double slope_drift_std = 0.01;
  double log_gain_drift_std = 0.05;
  double phase_jitter_std = 0.1;
  bool shared_noise = true;
  bool eve_shares_scatterers = false;

  double alice_jack_distance() const { return (alice_pos - jack_pos).norm(); }
  double alice_bob_distance() const { return (alice_pos - bob_pos).norm(); }

  // Moves Jack to distance `d` from Alice along the current Alice->Jack axis
  // (or -y when the two coincide).
  void set_alice_jack_distance(double d);

  void validate() const;
  bool operator==(const Scenario&) const = default;
};

struct ChannelSample {
  int time_slot = 0;
  ChannelMatrix alice_est;
  ChannelMatrix jack_est;
  std::vector<ChannelMatrix> eve_ests;
  double snr_db = 0.0;
  std::optional<ChannelMatrix> true_alice;
};

// H[m, n] = sum_l a_l exp(j(phi_l + m slope_l)) exp(-j 2 pi tau_l n / K).
ChannelMatrix synthesize_channel(const PathSet& paths, const ArrayConfig& cfg);

// Draws a fresh multipath geometry: delays in [0, 6) samples with an
// exponential power-delay profile, total power normalised to one.
PathSet draw_paths(int num_paths, const ArrayConfig& cfg, Rng& rng);

// Jack shares Alice's scatterers; each path gets delay and phase offsets
// proportional to d / lambda with per-path coefficients drawn from `rng`.
PathSet make_collaborator_paths(const PathSet& alice_paths,
                                const Scenario& scenario,
                                const ArrayConfig& cfg, Rng& rng);

struct EveCandidate {
  Vec3 position;
  PathSet paths;
};

// `alice_paths` is only consulted when scenario.eve_shares_scatterers is set.
std::vector<EveCandidate> make_eve_paths(const Scenario& scenario,
                                         const ArrayConfig& cfg, Rng& rng,
                                         const PathSet* alice_paths = nullptr);

// Circular Gaussian noise with per-entry variance sigma2.
ChannelMatrix draw_noise(Eigen::Index rows, Eigen::Index cols, double sigma2,
                         Rng& rng);

// Noise variance for a channel at the given SNR (mean entry power / SNR).
// Returns 0 for +inf.
double noise_variance(const ChannelMatrix& h, double snr_db);

// y = h x + n followed by the LS estimate (x^H x)^-1 x^H y.
ChannelMatrix estimate_ls(const ChannelMatrix& h, const ChannelMatrix& noise,
                          std::complex<double> pilot = {1.0, 0.0});

ChannelMatrix transmit_and_estimate(const ChannelMatrix& true_channel,
                                    double snr_db, Rng& rng,
                                    std::complex<double> pilot = {1.0, 0.0});

std::vector<ChannelSample> generate_dataset(const Scenario& scenario,
                                            const ArrayConfig& cfg,
                                            int num_samples, double snr_db,
                                            Rng& rng);

// Authentication stream labels: within every window of `window` consecutive
// entries exactly round(k * window) are Alice (a trailing partial window
// gets round(k * len)). Positions are shuffled with `rng`.
std::vector<bool> make_attack_schedule(std::size_t count, double k,
                                       std::size_t window, Rng& rng);

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json array_config_to_json(const ArrayConfig& c);
ArrayConfig array_config_from_json(const nlohmann::json& j);

}  // namespace apeg::channel
