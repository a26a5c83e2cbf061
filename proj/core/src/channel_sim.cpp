#include "apeg/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "apeg/errors.hpp"

namespace apeg::channel {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double p) {
  p = std::fmod(p, kTwoPi);
  return p < 0.0 ? p + kTwoPi : p;
}

}  // namespace

void ArrayConfig::validate() const {
  if (tx_antennas < 1) throw ConfigError("tx_antennas must be >= 1");
  if (rx_antennas < 1) throw ConfigError("rx_antennas must be >= 1");
  if (subcarriers < 2) throw ConfigError("subcarriers must be >= 2");
  if (!(carrier_hz > 0.0) || !(bandwidth_hz > 0.0)) {
    throw ConfigError("carrier and bandwidth must be positive");
  }
  if (!(element_spacing > 0.0)) throw ConfigError("element spacing must be positive");
}

void validate_paths(const PathSet& paths) {
  if (paths.empty()) throw ConfigError("path set is empty");
  for (const Path& p : paths) {
    if (!std::isfinite(p.gain) || !std::isfinite(p.delay) ||
        !std::isfinite(p.phase) || !std::isfinite(p.slope)) {
      throw ConfigError("non-finite path parameter");
    }
    if (!(p.gain > 0.0)) throw ConfigError("path gain must be positive");
  }
}

void Scenario::set_alice_jack_distance(double d) {
  Vec3 axis = jack_pos - alice_pos;
  if (axis.norm() == 0.0) axis = Vec3(0.0, -1.0, 0.0);
  jack_pos = alice_pos + d * axis.normalized();
}

void Scenario::validate() const {
  const double d = alice_jack_distance();
  const double D = alice_bob_distance();
  if (!(d < D / 10.0)) throw ConfigError("Alice-Jack distance must satisfy d < D/10");
  if (!(attack_ratio >= 0.0 && attack_ratio <= 1.0)) {
    throw ConfigError("attack ratio k must lie in [0, 1]");
  }
  if (num_eves < 1) throw ConfigError("num_eves must be >= 1");
  if (!(eve_radius > 0.0)) throw ConfigError("eve radius must be positive");
  if (num_paths < 1 || num_paths > kMaxPaths) {
    throw ConfigError("num_paths must lie in [1, " + std::to_string(kMaxPaths) + "]");
  }
  if (!(slot_seconds > 0.0)) throw ConfigError("slot duration must be positive");
  if (!(drift_memory >= 0.0 && drift_memory < 1.0)) {
    throw ConfigError("drift_memory must lie in [0, 1)");
  }
}

ChannelMatrix synthesize_channel(const PathSet& paths, const ArrayConfig& cfg) {
  cfg.validate();
  validate_paths(paths);
  const int M = cfg.tx_antennas;
  const int K = cfg.subcarriers;
  ChannelMatrix h = ChannelMatrix::Zero(M, K);
  for (const Path& p : paths) {
    for (int m = 0; m < M; ++m) {
      const double spatial = p.phase + m * p.slope;
      for (int n = 0; n < K; ++n) {
        const double angle = spatial - kTwoPi * p.delay * n / K;
        h(m, n) += std::polar(p.gain, angle);
      }
    }
  }
  return h;
}

PathSet draw_paths(int num_paths, const ArrayConfig& cfg, Rng& rng) {
  if (num_paths < 1) throw ConfigError("num_paths must be >= 1");
  PathSet paths(static_cast<std::size_t>(num_paths));
  std::vector<double> delays(paths.size());
  for (double& d : delays) d = rng.uniform(0.0, 6.0);
  std::sort(delays.begin(), delays.end());
  double power = 0.0;
  for (std::size_t l = 0; l < paths.size(); ++l) {
    Path& p = paths[l];
    p.delay = delays[l];
    const double theta = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    p.slope = kTwoPi * cfg.element_spacing * std::sin(theta);
    p.gain = std::exp(-p.delay / 3.0) * std::exp(0.3 * rng.normal());
    p.phase = rng.uniform(0.0, kTwoPi);
    power += p.gain * p.gain;
  }
  const double scale = 1.0 / std::sqrt(power);
  for (Path& p : paths) p.gain *= scale;
  return paths;
}

PathSet make_collaborator_paths(const PathSet& alice_paths,
                                const Scenario& scenario,
                                const ArrayConfig& cfg, Rng& rng) {
  validate_paths(alice_paths);
  const double d = scenario.alice_jack_distance();
  if (d < 0.0 || !std::isfinite(d)) throw ConfigError("invalid Alice-Jack distance");
  const double wavelengths = d / cfg.wavelength();
  PathSet out = alice_paths;
  for (Path& p : out) {
    const double u = rng.uniform(-1.0, 1.0);
    const double w = rng.uniform(-1.0, 1.0);
    if (wavelengths == 0.0) continue;
    p.delay += scenario.delay_offset_per_wavelength * wavelengths * u;
    p.phase = wrap_phase(p.phase + scenario.phase_offset_per_wavelength * wavelengths * w);
  }
  return out;
}

std::vector<EveCandidate> make_eve_paths(const Scenario& scenario,
                                         const ArrayConfig& cfg, Rng& rng,
                                         const PathSet* alice_paths) {
  if (scenario.num_eves < 1) throw ConfigError("num_eves must be >= 1");
  if (!(scenario.eve_radius > 0.0)) throw ConfigError("eve radius must be positive");
  if (scenario.eve_shares_scatterers && alice_paths == nullptr) {
    throw ConfigError("eve_shares_scatterers needs Alice's path set");
  }
  std::vector<EveCandidate> eves;
  eves.reserve(static_cast<std::size_t>(scenario.num_eves));
  for (int e = 0; e < scenario.num_eves; ++e) {
    // Uniform in the disk: radius ~ r sqrt(U).
    const double rho = scenario.eve_radius * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, kTwoPi);
    EveCandidate eve;
    eve.position = scenario.alice_pos + Vec3(rho * std::cos(ang), rho * std::sin(ang), 0.0);
    if (scenario.eve_shares_scatterers) {
      Scenario offset = scenario;
      offset.jack_pos = eve.position;
      eve.paths = make_collaborator_paths(*alice_paths, offset, cfg, rng);
    } else {
      eve.paths = draw_paths(scenario.num_paths, cfg, rng);
    }
    eves.push_back(std::move(eve));
  }
  return eves;
}

ChannelMatrix draw_noise(Eigen::Index rows, Eigen::Index cols, double sigma2,
                         Rng& rng) {
  ChannelMatrix n(rows, cols);
  const double s = std::sqrt(sigma2 / 2.0);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double re = rng.normal();
      const double im = rng.normal();
      n(r, c) = {s * re, s * im};
    }
  }
  return n;
}

double noise_variance(const ChannelMatrix& h, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0.0) return 0.0;
  if (!std::isfinite(snr_db)) throw ConfigError("SNR must be finite or +inf");
  const double power = h.cwiseAbs2().mean();
  return power * std::pow(10.0, -snr_db / 10.0);
}

ChannelMatrix estimate_ls(const ChannelMatrix& h, const ChannelMatrix& noise,
                          std::complex<double> pilot) {
  if (h.rows() != noise.rows() || h.cols() != noise.cols()) {
    throw ShapeError("noise shape does not match channel");
  }
  if (pilot == std::complex<double>(0.0, 0.0)) throw ConfigError("pilot must be nonzero");
  const ChannelMatrix y = h * pilot + noise;
  return y * (std::conj(pilot) / std::norm(pilot));
}

ChannelMatrix transmit_and_estimate(const ChannelMatrix& true_channel,
                                    double snr_db, Rng& rng,
                                    std::complex<double> pilot) {
  const double sigma2 = noise_variance(true_channel, snr_db);
  if (sigma2 == 0.0) {
    return estimate_ls(true_channel,
                       ChannelMatrix::Zero(true_channel.rows(), true_channel.cols()),
                       pilot);
  }
  return estimate_ls(true_channel,
                     draw_noise(true_channel.rows(), true_channel.cols(), sigma2, rng),
                     pilot);
}

std::vector<ChannelSample> generate_dataset(const Scenario& scenario,
                                            const ArrayConfig& cfg,
                                            int num_samples, double snr_db,
                                            Rng& rng) {
  scenario.validate();
  cfg.validate();
  if (num_samples < 1) throw ConfigError("num_samples must be >= 1");

  Rng paths_rng = rng.fork("paths");
  Rng eve_rng = rng.fork("eves");
  const Rng collaborator_rng = rng.fork("collaborator");

  const PathSet base = draw_paths(scenario.num_paths, cfg, paths_rng);
  const std::size_t L = base.size();
  // Direction cosine between each path and the velocity vector.
  std::vector<double> doppler_cos(L);
  for (double& c : doppler_cos) c = paths_rng.uniform(-1.0, 1.0);
  const std::vector<EveCandidate> eves = make_eve_paths(scenario, cfg, eve_rng, &base);

  const double lambda = cfg.wavelength();
  const double step_m = scenario.velocity.norm() * scenario.slot_seconds;
  const double a = scenario.drift_memory;

  PathSet state = base;
  std::vector<double> log_gain(L, 0.0);
  Vec3 alice_pos = scenario.alice_pos;
  Vec3 jack_pos = scenario.jack_pos;

  std::vector<ChannelSample> out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int slot = 0; slot < num_samples; ++slot) {
    Rng drift = rng.fork("drift", static_cast<std::uint64_t>(slot));
    for (std::size_t l = 0; l < L; ++l) {
      Path& p = state[l];
      p.delay = base[l].delay + a * (p.delay - base[l].delay) +
                scenario.delay_drift_std * drift.normal();
      p.slope = base[l].slope + a * (p.slope - base[l].slope) +
                scenario.slope_drift_std * drift.normal();
      log_gain[l] = a * log_gain[l] + scenario.log_gain_drift_std * drift.normal();
      p.gain = base[l].gain * std::exp(log_gain[l]);
      p.phase = wrap_phase(p.phase + kTwoPi * step_m * doppler_cos[l] / lambda +
                           scenario.phase_jitter_std * drift.normal());
    }

    Scenario at_slot = scenario;
    at_slot.alice_pos = alice_pos;
    at_slot.jack_pos = jack_pos;
    Rng collab = collaborator_rng;
    const PathSet jack_paths = make_collaborator_paths(state, at_slot, cfg, collab);

    const ChannelMatrix h_a = synthesize_channel(state, cfg);
    const ChannelMatrix h_j = synthesize_channel(jack_paths, cfg);

    Rng noise_rng = rng.fork("noise", static_cast<std::uint64_t>(slot));
    const double sigma2 = noise_variance(h_a, snr_db);
    const ChannelMatrix n_a = draw_noise(h_a.rows(), h_a.cols(), sigma2, noise_rng);
    const ChannelMatrix n_j = scenario.shared_noise
                                  ? n_a
                                  : draw_noise(h_j.rows(), h_j.cols(), sigma2, noise_rng);

    Rng eve_slot = rng.fork("eve_slot", static_cast<std::uint64_t>(slot));
    const int eve_index = eve_slot.uniform_int(0, scenario.num_eves - 1);
    PathSet eve_paths = eves[static_cast<std::size_t>(eve_index)].paths;
    for (Path& p : eve_paths) p.phase = eve_slot.uniform(0.0, kTwoPi);
    const ChannelMatrix h_e = synthesize_channel(eve_paths, cfg);
    const double sigma2_e = noise_variance(h_e, snr_db);
    const ChannelMatrix n_e = draw_noise(h_e.rows(), h_e.cols(), sigma2_e, eve_slot);

    ChannelSample s;
    s.time_slot = slot;
    s.snr_db = snr_db;
    s.alice_est = estimate_ls(h_a, n_a);
    s.jack_est = estimate_ls(h_j, n_j);
    s.eve_ests.push_back(estimate_ls(h_e, n_e));
    s.true_alice = h_a;
    out.push_back(std::move(s));

    alice_pos += scenario.velocity * scenario.slot_seconds;
    jack_pos += scenario.velocity * scenario.slot_seconds;
  }
  return out;
}

std::vector<bool> make_attack_schedule(std::size_t count, double k,
                                       std::size_t window, Rng& rng) {
  if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("attack ratio k must lie in [0, 1]");
  if (window == 0) window = count;
  std::vector<bool> labels;
  labels.reserve(count);
  for (std::size_t start = 0; start < count; start += window) {
    const std::size_t len = std::min(window, count - start);
    const auto alice = static_cast<std::size_t>(std::lround(k * static_cast<double>(len)));
    std::vector<bool> block(len, false);
    std::fill_n(block.begin(), alice, true);
    std::shuffle(block.begin(), block.end(), rng.engine());
    labels.insert(labels.end(), block.begin(), block.end());
  }
  return labels;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

nlohmann::json scenario_to_json(const Scenario& s) {
  return {
      {"alice_pos", vec_json(s.alice_pos)},
      {"jack_pos", vec_json(s.jack_pos)},
      {"bob_pos", vec_json(s.bob_pos)},
      {"alice_jack_distance", s.alice_jack_distance()},
      {"alice_bob_distance", s.alice_bob_distance()},
      {"eve_radius", s.eve_radius},
      {"num_eves", s.num_eves},
      {"attack_ratio", s.attack_ratio},
      {"velocity", vec_json(s.velocity)},
      {"rng_seed", s.rng_seed},
      {"num_paths", s.num_paths},
      {"slot_seconds", s.slot_seconds},
      {"delay_offset_per_wavelength", s.delay_offset_per_wavelength},
      {"phase_offset_per_wavelength", s.phase_offset_per_wavelength},
      {"drift_memory", s.drift_memory},
      {"delay_drift_std", s.delay_drift_std},
      {"slope_drift_std", s.slope_drift_std},
      {"log_gain_drift_std", s.log_gain_drift_std},
      {"phase_jitter_std", s.phase_jitter_std},
      {"shared_noise", s.shared_noise},
      {"eve_shares_scatterers", s.eve_shares_scatterers},
  };
}

Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.alice_pos = vec_from(j.at("alice_pos"));
    s.jack_pos = vec_from(j.at("jack_pos"));
    s.bob_pos = vec_from(j.at("bob_pos"));
    s.eve_radius = j.at("eve_radius").get<double>();
    s.num_eves = j.at("num_eves").get<int>();
    s.attack_ratio = j.at("attack_ratio").get<double>();
    s.velocity = vec_from(j.at("velocity"));
    s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    s.num_paths = j.value("num_paths", s.num_paths);
    s.slot_seconds = j.value("slot_seconds", s.slot_seconds);
    s.delay_offset_per_wavelength =
        j.value("delay_offset_per_wavelength", s.delay_offset_per_wavelength);
    s.phase_offset_per_wavelength =
        j.value("phase_offset_per_wavelength", s.phase_offset_per_wavelength);
    s.drift_memory = j.value("drift_memory", s.drift_memory);
    s.delay_drift_std = j.value("delay_drift_std", s.delay_drift_std);
    s.slope_drift_std = j.value("slope_drift_std", s.slope_drift_std);
    s.log_gain_drift_std = j.value("log_gain_drift_std", s.log_gain_drift_std);
    s.phase_jitter_std = j.value("phase_jitter_std", s.phase_jitter_std);
    s.shared_noise = j.value("shared_noise", s.shared_noise);
    s.eve_shares_scatterers = j.value("eve_shares_scatterers", s.eve_shares_scatterers);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad scenario metadata: ") + e.what());
  }
}

nlohmann::json array_config_to_json(const ArrayConfig& c) {
  return {{"tx_antennas", c.tx_antennas},   {"rx_antennas", c.rx_antennas},
          {"subcarriers", c.subcarriers},   {"carrier_hz", c.carrier_hz},
          {"bandwidth_hz", c.bandwidth_hz}, {"element_spacing", c.element_spacing}};
}

ArrayConfig array_config_from_json(const nlohmann::json& j) {
  try {
    ArrayConfig c;
    c.tx_antennas = j.at("tx_antennas").get<int>();
    c.rx_antennas = j.at("rx_antennas").get<int>();
    c.subcarriers = j.at("subcarriers").get<int>();
    c.carrier_hz = j.at("carrier_hz").get<double>();
    c.bandwidth_hz = j.at("bandwidth_hz").get<double>();
    c.element_spacing = j.at("element_spacing").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad array metadata: ") + e.what());
  }
}

}  // namespace apeg::channel
