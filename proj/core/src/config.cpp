#include "apeg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "apeg/errors.hpp"

namespace apeg::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("not a number: '" + s + "'");
  }
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("not an integer: '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

std::string fmt_vec3(const channel::Vec3& v) {
  return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z());
}

channel::Vec3 to_vec3(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 3) throw ConfigError("expected three comma-separated numbers: '" + s + "'");
  return {to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& s, F f) {
  std::vector<T> out;
  for (const auto& p : split_list(s)) out.push_back(f(p));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define APEG_NUM(key, member)                                             \
  Field {                                                                 \
    key, [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); }, \
        [](RunConfig& c, const std::string& v) { c.member = to_double(v); } \
  }
#define APEG_INT(key, member)                                                 \
  Field {                                                                     \
    key, [](const RunConfig& c) { return std::to_string(c.member); },        \
        [](RunConfig& c, const std::string& v) {                              \
          c.member = to_int<std::remove_cvref_t<decltype(c.member)>>(v);      \
        }                                                                     \
  }
#define APEG_BOOL(key, member)                                 \
  Field {                                                      \
    key, [](const RunConfig& c) { return fmt(c.member); },    \
        [](RunConfig& c, const std::string& v) { c.member = to_bool(v); } \
  }
#define APEG_VEC3(key, member)                                  \
  Field {                                                       \
    key, [](const RunConfig& c) { return fmt_vec3(c.member); }, \
        [](RunConfig& c, const std::string& v) { c.member = to_vec3(v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); }},
      {"out_dir", [](const RunConfig& c) { return c.out_dir; },
       [](RunConfig& c, const std::string& v) {
         if (v.empty()) throw ConfigError("out_dir must not be empty");
         c.out_dir = v;
       }},

      APEG_INT("num_samples", num_samples),
      APEG_NUM("train_fraction", train_fraction),
      {"split", [](const RunConfig& c) { return std::string(c.split == SplitMode::Time ? "time" : "random"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "time") c.split = SplitMode::Time;
         else if (v == "random") c.split = SplitMode::Random;
         else throw ConfigError("split must be time or random");
       }},
      APEG_NUM("data_snr_db", data_snr_db),
      {"norm", [](const RunConfig& c) { return std::string(c.norm == fp::NormPolicy::Joint ? "joint" : "per_plane"); },
       [](RunConfig& c, const std::string& v) {
         if (v == "joint") c.norm = fp::NormPolicy::Joint;
         else if (v == "per_plane") c.norm = fp::NormPolicy::PerPlane;
         else throw ConfigError("norm must be joint or per_plane");
       }},

      APEG_INT("array.tx_antennas", array.tx_antennas),
      APEG_INT("array.rx_antennas", array.rx_antennas),
      APEG_INT("array.subcarriers", array.subcarriers),
      APEG_NUM("array.carrier_hz", array.carrier_hz),
      APEG_NUM("array.bandwidth_hz", array.bandwidth_hz),
      APEG_NUM("array.element_spacing", array.element_spacing),

      APEG_VEC3("scenario.alice_pos", scenario.alice_pos),
      APEG_VEC3("scenario.jack_pos", scenario.jack_pos),
      APEG_VEC3("scenario.bob_pos", scenario.bob_pos),
      APEG_VEC3("scenario.velocity", scenario.velocity),
      APEG_NUM("scenario.eve_radius", scenario.eve_radius),
      APEG_INT("scenario.num_eves", scenario.num_eves),
      APEG_NUM("scenario.attack_ratio", scenario.attack_ratio),
      APEG_INT("scenario.num_paths", scenario.num_paths),
      APEG_NUM("scenario.slot_seconds", scenario.slot_seconds),
      APEG_NUM("scenario.delay_offset_per_wavelength", scenario.delay_offset_per_wavelength),
      APEG_NUM("scenario.phase_offset_per_wavelength", scenario.phase_offset_per_wavelength),
      APEG_NUM("scenario.drift_memory", scenario.drift_memory),
      APEG_NUM("scenario.delay_drift_std", scenario.delay_drift_std),
      APEG_NUM("scenario.slope_drift_std", scenario.slope_drift_std),
      APEG_NUM("scenario.log_gain_drift_std", scenario.log_gain_drift_std),
      APEG_NUM("scenario.phase_jitter_std", scenario.phase_jitter_std),
      APEG_BOOL("scenario.shared_noise", scenario.shared_noise),
      APEG_BOOL("scenario.eve_shares_scatterers", scenario.eve_shares_scatterers),

      APEG_INT("diffusion.steps", schedule.steps),
      APEG_NUM("diffusion.beta_start", schedule.beta_start),
      APEG_NUM("diffusion.beta_end", schedule.beta_end),
      {"diffusion.noise_scaling",
       [](const RunConfig& c) {
         return std::string(c.noise_scaling == diffusion::NoiseScaling::Sqrt ? "sqrt" : "literal");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "sqrt") c.noise_scaling = diffusion::NoiseScaling::Sqrt;
         else if (v == "literal") c.noise_scaling = diffusion::NoiseScaling::Literal;
         else throw ConfigError("diffusion.noise_scaling must be sqrt or literal");
       }},

      APEG_INT("net.base_channels", net.base_channels),
      {"net.channel_mults",
       [](const RunConfig& c) { return join(c.net.channel_mults, [](int m) { return std::to_string(m); }); },
       [](RunConfig& c, const std::string& v) { c.net.channel_mults = parse_list<int>(v, to_int<int>); }},
      APEG_INT("net.res_blocks", net.res_blocks),
      {"net.self_attn",
       [](const RunConfig& c) { return join(c.net.self_attn, [](bool b) { return fmt(b); }); },
       [](RunConfig& c, const std::string& v) { c.net.self_attn = parse_list<bool>(v, to_bool); }},
      {"net.cross_attn_levels",
       [](const RunConfig& c) { return join(c.net.cross_attn_levels, [](bool b) { return fmt(b); }); },
       [](RunConfig& c, const std::string& v) { c.net.cross_attn_levels = parse_list<bool>(v, to_bool); }},
      APEG_INT("net.heads", net.heads),
      APEG_INT("net.time_embed_mult", net.time_embed_mult),
      APEG_NUM("net.dropout", net.dropout),

      APEG_INT("train.epochs", epochs),
      APEG_INT("train.batch", batch),
      APEG_NUM("train.lr", lr),

      APEG_INT("sample.batch", sample_batch),
      {"auth.metrics",
       [](const RunConfig& c) { return join(c.metrics, [](auth::MetricKind k) { return auth::metric_name(k); }); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.metrics = parse_list<auth::MetricKind>(v, auth::parse_metric);
         } catch (const ConfigError&) {
           throw;
         } catch (const std::exception& e) {
           throw ConfigError(e.what());
         }
       }},
      APEG_INT("auth.window", auth_window),
      {"auth.snr_list",
       [](const RunConfig& c) { return join(c.snr_list, [](double d) { return fmt(d); }); },
       [](RunConfig& c, const std::string& v) { c.snr_list = parse_list<double>(v, to_double); }},
  };
  return table;
}

#undef APEG_NUM
#undef APEG_INT
#undef APEG_BOOL
#undef APEG_VEC3

}  // namespace

const char* preset_name(Preset p) { return p == Preset::Desk ? "desk" : "paper"; }

Preset parse_preset(const std::string& s) {
  if (s == "desk") return Preset::Desk;
  if (s == "paper") return Preset::Paper;
  throw ConfigError("unknown preset '" + s + "' (expected desk or paper)");
}

RunConfig preset_config(Preset p) {
  RunConfig c;
  c.preset = p;
  if (p == Preset::Paper) {
    c.num_samples = 12000;
    c.schedule = {1000, 1e-4, 0.02};
    c.net.base_channels = 64;
    c.net.channel_mults = {1, 2, 4, 4};
    c.net.res_blocks = 2;
    c.net.self_attn = {true, false, false, true};
    c.net.cross_attn_levels = {true, true, true, true};
    c.net.heads = 4;
    c.net.time_embed_mult = 4;
    c.net.dropout = 0.1;
    c.epochs = 1600;
    c.batch = 128;
    c.lr = 1e-4;
  }
  return c;
}

void RunConfig::validate() const {
  scenario.validate();
  array.validate();
  if (num_samples < 2) throw ConfigError("num_samples must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const int train = static_cast<int>(std::floor(train_fraction * num_samples));
  if (train < 1 || train >= num_samples) throw ConfigError("split leaves an empty train or test set");
  if (schedule.steps < 1) throw ConfigError("diffusion.steps must be >= 1");
  if (!(schedule.beta_start > 0.0 && schedule.beta_end < 1.0 &&
        schedule.beta_start <= schedule.beta_end)) {
    throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  net.validate(array.tx_antennas, array.subcarriers);
  net.validate(2 * array.tx_antennas, array.subcarriers);
  if (net.in_channels != 2) throw ConfigError("fingerprint images have two planes");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (sample_batch < 1) throw ConfigError("sample.batch must be >= 1");
  if (metrics.empty()) throw ConfigError("auth.metrics must name at least one metric");
  if (auth_window < 0) throw ConfigError("auth.window must be >= 0");
  if (snr_list.empty()) throw ConfigError("auth.snr_list must not be empty");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys{"preset"};
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig parse_config(std::string_view text, std::optional<Preset> preset_override) {
  std::map<std::string, std::pair<std::string, int>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!entries.emplace(key, std::make_pair(value, lineno)).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }

  Preset preset = Preset::Desk;
  if (const auto it = entries.find("preset"); it != entries.end()) {
    preset = parse_preset(it->second.first);
    entries.erase(it);
  }
  if (preset_override) preset = *preset_override;
  RunConfig c = preset_config(preset);

  for (const auto& f : fields()) {
    const auto it = entries.find(f.key);
    if (it == entries.end()) continue;
    try {
      f.set(c, it->second.first);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(it->second.second) + " (" + f.key + "): " + e.what());
    }
    entries.erase(it);
  }
  if (!entries.empty()) {
    const auto& [key, v] = *entries.begin();
    throw ConfigError("line " + std::to_string(v.second) + ": unknown key '" + key + "'");
  }
  c.scenario.rng_seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<Preset> preset_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), preset_override);
}

std::string serialize_config(const RunConfig& c) {
  std::string out = "preset = " + std::string(preset_name(c.preset)) + "\n";
  for (const auto& f : fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace apeg::config
