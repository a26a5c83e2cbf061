#include "apeg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "apeg/csv.hpp"
#include "apeg/dataset_io.hpp"
#include "apeg/errors.hpp"
#include "apeg/nn/checkpoint.hpp"
#include "apeg/training.hpp"

namespace apeg::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;

namespace {

constexpr int kLossWindow = 20;

Rng root_rng(const RunConfig& cfg) { return Rng(cfg.seed); }

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create " + p.string() + ": " + ec.message());
}

std::vector<channel::ChannelSample> load_split(const fs::path& p, const RunConfig& cfg) {
  if (!fs::exists(p)) throw DataError("missing dataset " + p.string() + " (run gen-data first)");
  return io::load_external_dataset(p, &cfg.array).samples;
}

fp::NormStats load_norm(const Paths& paths) {
  if (!fs::exists(io::sidecar_path(paths.train_data()))) {
    throw DataError("missing " + io::sidecar_path(paths.train_data()).string() +
                    " (run gen-data first)");
  }
  const auto meta = io::read_sidecar(paths.train_data());
  try {
    return fp::norm_from_json(meta.at("norm"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad normalisation record: ") + e.what());
  }
}

std::vector<auth::Label> read_stream(const fs::path& p, std::size_t expected) {
  if (!fs::exists(p)) throw DataError("missing stream " + p.string() + " (run gen-data first)");
  const auto rows = csv::read_file(p);
  if (rows.empty() || rows[0] != std::vector<std::string>{"index", "time_slot", "label"}) {
    throw DataError("bad stream header in " + p.string());
  }
  std::vector<auth::Label> labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw DataError("bad stream row " + std::to_string(i));
    const std::string& l = rows[i][2];
    if (l == "alice") labels.push_back(auth::Label::Alice);
    else if (l == "eve") labels.push_back(auth::Label::Eve);
    else throw DataError("bad stream label '" + l + "'");
  }
  if (labels.empty()) throw DataError("empty authentication stream");
  if (labels.size() != expected) {
    throw DataError("stream has " + std::to_string(labels.size()) + " entries but the test split has " +
                    std::to_string(expected));
  }
  return labels;
}

struct LoadedNet {
  nn::Checkpoint ckpt;
  std::unique_ptr<nn::UNet> net;
};

LoadedNet load_network(const Paths& paths, Model m, const RunConfig& cfg) {
  const fs::path p = paths.checkpoint(m);
  if (!fs::exists(p)) {
    throw CheckpointError("missing checkpoint " + p.string() + " (run train --variant " +
                          model_name(m) + ")");
  }
  LoadedNet out{nn::load_checkpoint(p), nullptr};
  if (out.ckpt.variant != to_variant(m)) {
    throw CheckpointError(p.string() + " holds a " + nn::variant_name(out.ckpt.variant) +
                          " model, not " + model_name(m));
  }
  const int rows = (out.ckpt.variant == nn::Variant::Ccmdm ? 2 : 1) * cfg.array.tx_antennas;
  try {
    out.ckpt.net.validate(rows, cfg.array.subcarriers);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint does not fit the data shape: " + std::string(e.what()));
  }
  Rng init(0);
  out.net = std::make_unique<nn::UNet>(out.ckpt.net, init);
  nn::apply_checkpoint(out.ckpt, *out.net->params());
  return out;
}

diffusion::NoiseSchedule to_schedule(const nn::ScheduleParams& p) {
  return diffusion::make_schedule(p.steps, p.beta_start, p.beta_end);
}

nlohmann::json split_meta(const RunConfig& cfg, const fp::NormStats& norm, const char* part,
                          std::size_t count) {
  channel::Scenario sc = cfg.scenario;
  sc.rng_seed = cfg.seed;
  return {{"part", part},
          {"count", count},
          {"rng_seed", cfg.seed},
          {"snr_db", cfg.data_snr_db},
          {"split_mode", cfg.split == config::SplitMode::Time ? "time" : "random"},
          {"train_fraction", cfg.train_fraction},
          {"scenario", channel::scenario_to_json(sc)},
          {"array", channel::array_config_to_json(cfg.array)},
          {"norm", fp::norm_to_json(norm)}};
}

const char* label_tag(auth::Label l) { return l == auth::Label::Alice ? "alice" : "eve"; }

void write_cdf_rows(csv::Writer& w, const std::vector<std::string>& prefix, const char* metric,
                    const std::vector<double>& values) {
  for (const auto& [v, p] : empirical_cdf(values)) {
    auto row = prefix;
    row.push_back(metric);
    row.push_back(csv::number(v));
    row.push_back(csv::number(p));
    w.row(row);
  }
}

template <class F>
std::vector<double> column(const std::vector<QualityRow>& q, F f) {
  std::vector<double> out;
  out.reserve(q.size());
  for (const auto& r : q) out.push_back(f(r));
  return out;
}

QualityRow mean_quality(const std::vector<QualityRow>& q) {
  QualityRow m;
  for (const auto& r : q) {
    m.ssim += r.ssim;
    m.psnr += r.psnr;
    m.cosine += r.cosine;
    m.nmse_db += r.nmse_db;
  }
  const double n = static_cast<double>(std::max<std::size_t>(q.size(), 1));
  m.ssim /= n;
  m.psnr /= n;
  m.cosine /= n;
  m.nmse_db /= n;
  return m;
}

}  // namespace

// ------------------------------------------------------------ model tags

const char* model_name(Model m) {
  switch (m) {
    case Model::Ccmdm: return "ccmdm";
    case Model::Cadm: return "cadm";
    case Model::Ca: return "ca";
    case Model::Oracle: return "oracle";
  }
  return "?";
}

Model parse_model(const std::string& s) {
  for (Model m : kAllModels) {
    if (s == model_name(m)) return m;
  }
  throw ConfigError("unknown variant '" + s + "' (expected ccmdm, cadm, ca or oracle)");
}

bool is_learned(Model m) { return m == Model::Ccmdm || m == Model::Cadm; }

nn::Variant to_variant(Model m) {
  if (m == Model::Ccmdm) return nn::Variant::Ccmdm;
  if (m == Model::Cadm) return nn::Variant::Cadm;
  throw ConfigError(std::string(model_name(m)) + " has no network");
}

// ------------------------------------------------------------ building blocks

Split make_split(const RunConfig& cfg, double snr_db) {
  cfg.validate();
  channel::Scenario sc = cfg.scenario;
  sc.rng_seed = cfg.seed;
  Rng rng = root_rng(cfg).fork("dataset");
  auto all = channel::generate_dataset(sc, cfg.array, cfg.num_samples, snr_db, rng);
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * cfg.num_samples));

  std::vector<char> is_train(all.size(), 0);
  if (cfg.split == config::SplitMode::Time) {
    std::fill(is_train.begin(), is_train.begin() + static_cast<std::ptrdiff_t>(n_train), 1);
  } else {
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng shuffle = root_rng(cfg).fork("split");
    std::shuffle(idx.begin(), idx.end(), shuffle.engine());
    for (std::size_t i = 0; i < n_train; ++i) is_train[idx[i]] = 1;
  }
  Split out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (is_train[i] ? out.train : out.test).push_back(std::move(all[i]));
  }
  return out;
}

fp::NormStats fit_train_norm(const RunConfig& cfg, const std::vector<channel::ChannelSample>& train) {
  auto hs = alice_estimates(train);
  const auto js = jack_estimates(train);
  hs.insert(hs.end(), js.begin(), js.end());
  return fp::fit_norm(hs, cfg.norm);
}

std::vector<auth::Label> stream_labels(const RunConfig& cfg, std::size_t count) {
  const std::size_t window = cfg.auth_window > 0 ? static_cast<std::size_t>(cfg.auth_window) : count;
  Rng rng = root_rng(cfg).fork("stream");
  const auto alice = channel::make_attack_schedule(count, cfg.attack_ratio(), std::max<std::size_t>(window, 1), rng);
  std::vector<auth::Label> labels;
  labels.reserve(alice.size());
  for (bool a : alice) labels.push_back(a ? auth::Label::Alice : auth::Label::Eve);
  return labels;
}

std::vector<channel::ChannelMatrix> received_stream(const std::vector<channel::ChannelSample>& test,
                                                    const std::vector<auth::Label>& labels) {
  if (labels.size() != test.size()) throw ShapeError("stream and test split differ in length");
  std::vector<channel::ChannelMatrix> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (labels[i] == auth::Label::Alice) {
      out.push_back(test[i].alice_est);
    } else {
      if (test[i].eve_ests.empty()) throw DataError("slot " + std::to_string(i) + " has no Eve estimate");
      out.push_back(test[i].eve_ests.front());
    }
  }
  return out;
}

std::vector<channel::ChannelMatrix> alice_estimates(const std::vector<channel::ChannelSample>& s) {
  std::vector<channel::ChannelMatrix> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(x.alice_est);
  return out;
}

std::vector<channel::ChannelMatrix> jack_estimates(const std::vector<channel::ChannelSample>& s) {
  std::vector<channel::ChannelMatrix> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(x.jack_est);
  return out;
}

nn::NetConfig net_config_for(const RunConfig& cfg, nn::Variant v) {
  nn::NetConfig n = cfg.net;
  n.cross_attn = v == nn::Variant::Cadm;
  return n;
}

TrainResult train_network(const RunConfig& cfg, nn::Variant v, nn::UNet& net,
                          const fp::NormStats& norm,
                          const std::vector<channel::ChannelSample>& train,
                          const std::vector<channel::ChannelSample>& validation, std::ostream* log) {
  const auto schedule = to_schedule(cfg.schedule);
  const diffusion::PairData data{fp::to_images(alice_estimates(train), norm),
                                 fp::to_images(jack_estimates(train), norm)};
  const auto vi = static_cast<std::uint64_t>(v);
  net.set_dropout_rng(root_rng(cfg).fork("dropout", vi));

  diffusion::TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch = cfg.batch;
  opt.lr = cfg.lr;
  opt.seed = root_rng(cfg).fork("training", vi).next_u64();
  if (log != nullptr) {
    opt.on_epoch = [log](int e, double l) { *log << "epoch " << e << " loss " << l << "\n" << std::flush; };
  }
  TrainResult r;
  opt.on_batch = [&r](int, double l) { r.batch_losses.push_back(l); };
  r.losses = diffusion::train_model(v, net, schedule, data, opt);
  // The checkpoint stores f32 values; validate what will be saved.
  net.params()->round_to_float();
  if (!validation.empty()) {
    const diffusion::PairData val{fp::to_images(alice_estimates(validation), norm),
                                  fp::to_images(jack_estimates(validation), norm)};
    r.validation_loss = diffusion::validation_loss(v, net, schedule, val,
                                                   root_rng(cfg).fork("validation", vi).next_u64(),
                                                   cfg.batch);
  }
  return r;
}

Tensor generate_images(Model m, const RunConfig& cfg, const nn::ScheduleParams& schedule,
                       nn::NoisePredictor* net, const fp::NormStats& norm,
                       const std::vector<channel::ChannelSample>& test, Rng& rng) {
  switch (m) {
    case Model::Ca:
      return fp::to_images(jack_estimates(test), norm);
    case Model::Oracle: {
      std::vector<channel::ChannelMatrix> hs;
      for (const auto& s : test) {
        if (!s.true_alice) throw DataError("oracle mode needs the noiseless Alice channel");
        hs.push_back(*s.true_alice);
      }
      return fp::to_images(hs, norm);
    }
    case Model::Ccmdm:
    case Model::Cadm: {
      if (net == nullptr) throw ConfigError("learned model needs a network");
      const nn::GemmPrecisionScope precision(nn::GemmPrecision::Single);
      const Tensor jack = fp::to_images(jack_estimates(test), norm);
      return diffusion::generate(to_variant(m), *net, to_schedule(schedule), jack, rng,
                                 cfg.noise_scaling, cfg.sample_batch);
    }
  }
  throw ConfigError("unknown model");
}

std::vector<QualityRow> quality(const Tensor& generated, const Tensor& alice) {
  require_same_shape(generated, alice, "quality");
  std::vector<QualityRow> out;
  out.reserve(static_cast<std::size_t>(generated.n()));
  for (int i = 0; i < generated.n(); ++i) {
    const Tensor g = generated.sample(i);
    const Tensor a = alice.sample(i);
    out.push_back({auth::ssim(g, a), auth::psnr(g, a), auth::cosine_sim(g, a), auth::nmse_db(g, a)});
  }
  return out;
}

AuthResult authenticate(auth::MetricKind metric, const Tensor& generated, const Tensor& received,
                        const std::vector<auth::Label>& labels, double k, int window) {
  require_same_shape(generated, received, "authenticate");
  const auto n = static_cast<std::size_t>(received.n());
  if (n == 0) throw DataError("empty authentication stream");
  if (labels.size() != n) throw ShapeError("one label per stream entry is required");
  const std::size_t w = window > 0 ? static_cast<std::size_t>(window) : n;

  AuthResult r;
  r.metric = metric;
  std::vector<double> values(n), dissims(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = auth::metric_value(metric, generated.sample(static_cast<int>(i)),
                                   received.sample(static_cast<int>(i)));
    dissims[i] = auth::to_dissimilarity(metric, values[i]);
  }
  for (std::size_t start = 0; start < n; start += w) {
    const std::size_t end = std::min(n, start + w);
    const std::vector<double> d(dissims.begin() + static_cast<std::ptrdiff_t>(start),
                                dissims.begin() + static_cast<std::ptrdiff_t>(end));
    const std::vector<auth::Label> l(labels.begin() + static_cast<std::ptrdiff_t>(start),
                                     labels.begin() + static_cast<std::ptrdiff_t>(end));
    for (auto dec : auth::decide_rank(d, k, l)) {
      dec.index += start;
      dec.value = values[dec.index];
      r.decisions.push_back(dec);
    }
  }
  std::sort(r.decisions.begin(), r.decisions.end(),
            [](const auth::Decision& a, const auth::Decision& b) { return a.index < b.index; });
  r.score = auth::score(r.decisions);
  return r;
}

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.emplace_back(values[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ------------------------------------------------------------ commands

GenDataSummary cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const Paths paths{cfg.out_dir};
  const Split split = make_split(cfg, cfg.data_snr_db);
  const fp::NormStats norm = fit_train_norm(cfg, split.train);
  ensure_dir(paths.data_dir());
  io::write_dataset(paths.train_data(), split.train, cfg.scenario.shared_noise);
  io::write_dataset(paths.test_data(), split.test, cfg.scenario.shared_noise);
  io::write_sidecar(paths.train_data(), split_meta(cfg, norm, "train", split.train.size()));
  io::write_sidecar(paths.test_data(), split_meta(cfg, norm, "test", split.test.size()));

  const auto labels = stream_labels(cfg, split.test.size());
  GenDataSummary s{split.train.size(), split.test.size(), 0, 0};
  csv::Writer w(paths.stream(), {"index", "time_slot", "label"});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    w.row({std::to_string(i), std::to_string(split.test[i].time_slot), label_tag(labels[i])});
    (labels[i] == auth::Label::Alice ? s.alice_in_stream : s.eve_in_stream) += 1;
  }
  w.close();
  log << "samples " << cfg.num_samples << " at " << cfg.data_snr_db << " dB\n"
      << "train " << s.train << " -> " << paths.train_data().string() << "\n"
      << "test " << s.test << " -> " << paths.test_data().string() << "\n"
      << "stream alice " << s.alice_in_stream << " eve " << s.eve_in_stream << "\n";
  return s;
}

TrainResult cmd_train(const RunConfig& cfg, Model m, std::ostream& log) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  if (m == Model::Ca) throw ConfigError("ca uses Jack's estimate directly and has nothing to train");
  const auto train = load_split(paths.train_data(), cfg);
  const auto test = load_split(paths.test_data(), cfg);
  const fp::NormStats norm = load_norm(paths);
  ensure_dir(paths.model_dir(m));

  if (m == Model::Oracle) {
    // Self-test: a predictor that returns the injected noise has zero loss.
    const auto schedule = to_schedule(cfg.schedule);
    const diffusion::PairData data{fp::to_images(alice_estimates(train), norm),
                                   fp::to_images(jack_estimates(train), norm)};
    nn::OracleNoisePredictor oracle;
    Rng rng = root_rng(cfg).fork("training", 2);
    csv::Writer w(paths.loss_csv(m), {"epoch", "loss_ccmdm", "loss_cadm"});
    double total[2] = {0.0, 0.0};
    for (int start = 0; start < data.size(); start += cfg.batch) {
      const auto batch = data.slice(start, std::min(cfg.batch, data.size() - start));
      for (int v = 0; v < 2; ++v) {
        const auto r = diffusion::batch_loss(static_cast<nn::Variant>(v), batch, rng, schedule,
                                             oracle, {false, false});
        total[v] += r.loss * batch.size();
      }
    }
    TrainResult r;
    r.losses = {total[0] / data.size(), total[1] / data.size()};
    w.row({"0", csv::number(r.losses[0]), csv::number(r.losses[1])});
    w.close();
    log << "oracle self-test loss ccmdm " << r.losses[0] << " cadm " << r.losses[1] << "\n";
    return r;
  }

  const nn::Variant v = to_variant(m);
  Rng init = root_rng(cfg).fork("init", static_cast<std::uint64_t>(v));
  nn::UNet net(net_config_for(cfg, v), init);
  log << model_name(m) << " parameters " << net.params()->total() << "\n";
  TrainResult r = train_network(cfg, v, net, norm, train, test, &log);

  const auto smooth = diffusion::moving_average(r.losses, kLossWindow);
  csv::Writer w(paths.loss_csv(m), {"epoch", "loss", "smoothed_loss"});
  for (std::size_t e = 0; e < r.losses.size(); ++e) {
    w.row({std::to_string(e), csv::number(r.losses[e]), csv::number(smooth[e])});
  }
  w.close();
  nn::save_checkpoint(paths.checkpoint(m), v, net.config(), cfg.schedule, *net.params());
  log << "validation loss " << r.validation_loss << "\n"
      << "checkpoint -> " << paths.checkpoint(m).string() << "\n";
  return r;
}

std::vector<QualityRow> cmd_generate(const RunConfig& cfg, Model m, std::ostream& log) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  const auto test = load_split(paths.test_data(), cfg);
  const fp::NormStats norm = load_norm(paths);

  LoadedNet loaded;
  nn::ScheduleParams schedule = cfg.schedule;
  if (is_learned(m)) {
    loaded = load_network(paths, m, cfg);
    schedule = loaded.ckpt.schedule;
  }
  Rng rng = root_rng(cfg).fork("sampling", static_cast<std::uint64_t>(m));
  const Tensor gen = generate_images(m, cfg, schedule, loaded.net.get(), norm, test, rng);
  const auto q = quality(gen, fp::to_images(alice_estimates(test), norm));

  ensure_dir(paths.model_dir(m));
  std::vector<channel::ChannelSample> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    channel::ChannelSample s;
    s.time_slot = test[i].time_slot;
    s.snr_db = test[i].snr_db;
    s.alice_est = fp::from_image_sample(gen, static_cast<int>(i), norm);
    s.jack_est = test[i].jack_est;
    out.push_back(std::move(s));
  }
  io::write_dataset(paths.generated(m), out, false);

  csv::Writer w(paths.quality_csv(m), {"sample_index", "time_slot", "ssim", "psnr", "cosine", "nmse_db"});
  for (std::size_t i = 0; i < q.size(); ++i) {
    w.row({std::to_string(i), std::to_string(test[i].time_slot), csv::number(q[i].ssim),
           csv::number(q[i].psnr), csv::number(q[i].cosine), csv::number(q[i].nmse_db)});
  }
  w.close();
  csv::Writer cdf(paths.quality_cdf(m), {"metric", "value", "cumulative_probability"});
  write_cdf_rows(cdf, {}, "ssim", column(q, [](const QualityRow& r) { return r.ssim; }));
  write_cdf_rows(cdf, {}, "psnr", column(q, [](const QualityRow& r) { return r.psnr; }));
  write_cdf_rows(cdf, {}, "cosine", column(q, [](const QualityRow& r) { return r.cosine; }));
  write_cdf_rows(cdf, {}, "nmse", column(q, [](const QualityRow& r) { return r.nmse_db; }));
  cdf.close();

  log << model_name(m) << " generated " << q.size() << " fingerprints\n"
      << "median ssim " << median(column(q, [](const QualityRow& r) { return r.ssim; }))
      << " psnr " << median(column(q, [](const QualityRow& r) { return r.psnr; }))
      << " cosine " << median(column(q, [](const QualityRow& r) { return r.cosine; }))
      << " nmse_db " << median(column(q, [](const QualityRow& r) { return r.nmse_db; })) << "\n";
  return q;
}

std::vector<AuthResult> cmd_auth(const RunConfig& cfg, Model m, std::ostream& log) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  const auto test = load_split(paths.test_data(), cfg);
  const fp::NormStats norm = load_norm(paths);
  if (!fs::exists(paths.generated(m))) {
    throw DataError("missing " + paths.generated(m).string() + " (run generate first)");
  }
  const auto generated = io::load_external_dataset(paths.generated(m), &cfg.array).samples;
  if (generated.size() != test.size()) throw DataError("generated set and test split differ in length");
  const auto labels = read_stream(paths.stream(), test.size());

  const Tensor gen = fp::to_images(alice_estimates(generated), norm);
  const Tensor rec = fp::to_images(received_stream(test, labels), norm);

  std::vector<AuthResult> results;
  csv::Writer dw(paths.decisions_csv(m), {"sample_index", "metric_kind", "value", "dissimilarity",
                                          "rank", "accepted", "true_label"});
  csv::Writer sw(paths.scores_csv(m), {"metric_kind", "tp", "fp", "fn", "tn", "precision", "recall",
                                       "f1", "error_rate"});
  for (auth::MetricKind k : cfg.metrics) {
    AuthResult r = authenticate(k, gen, rec, labels, cfg.attack_ratio(), cfg.auth_window);
    const std::string name = auth::metric_name(k);
    for (const auto& d : r.decisions) {
      dw.row({std::to_string(d.index), name, csv::number(d.value), csv::number(d.dissimilarity),
              std::to_string(d.rank), d.accepted ? "true" : "false", label_tag(d.label)});
    }
    const auto& c = r.score.counts;
    sw.row({name, std::to_string(c.tp), std::to_string(c.fp), std::to_string(c.fn), std::to_string(c.tn),
            csv::number(r.score.precision), csv::number(r.score.recall), csv::number(r.score.f1),
            csv::number(r.score.error_rate)});
    log << model_name(m) << " " << name << " f1 " << r.score.f1 << " error_rate " << r.score.error_rate
        << "\n";
    results.push_back(std::move(r));
  }
  dw.close();
  sw.close();
  return results;
}

std::vector<ReportRow> cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Paths paths{cfg.out_dir};
  const fp::NormStats norm = load_norm(paths);
  LoadedNet nets[2];
  for (Model m : {Model::Ccmdm, Model::Cadm}) {
    nets[static_cast<int>(m)] = load_network(paths, m, cfg);
  }
  ensure_dir(paths.eval_dir());

  std::vector<ReportRow> rows;
  csv::Writer rw(paths.report_csv(), {"snr_db", "metric_kind", "model", "f1", "error_rate", "mean_ssim",
                                      "mean_psnr", "mean_cosine", "mean_nmse_db"});
  csv::Writer cw(paths.cdf_csv(), {"snr_db", "model", "metric", "value", "cumulative_probability"});
  for (std::size_t si = 0; si < cfg.snr_list.size(); ++si) {
    const double snr = cfg.snr_list[si];
    const Split split = make_split(cfg, snr);
    const auto& test = split.test;
    const auto labels = stream_labels(cfg, test.size());
    const Tensor rec = fp::to_images(received_stream(test, labels), norm);
    const Tensor alice = fp::to_images(alice_estimates(test), norm);

    for (Model m : kAllModels) {
      nn::NoisePredictor* net = nullptr;
      nn::ScheduleParams schedule = cfg.schedule;
      if (is_learned(m)) {
        auto& l = nets[static_cast<int>(m)];
        net = l.net.get();
        schedule = l.ckpt.schedule;
      }
      Rng rng = root_rng(cfg).fork("eval_sampling", si * 4 + static_cast<std::size_t>(m));
      const Tensor gen = generate_images(m, cfg, schedule, net, norm, test, rng);
      const auto q = quality(gen, alice);
      const QualityRow mq = mean_quality(q);

      const std::vector<std::string> prefix{csv::number(snr), model_name(m)};
      write_cdf_rows(cw, prefix, "ssim", column(q, [](const QualityRow& r) { return r.ssim; }));
      write_cdf_rows(cw, prefix, "psnr", column(q, [](const QualityRow& r) { return r.psnr; }));
      write_cdf_rows(cw, prefix, "nmse", column(q, [](const QualityRow& r) { return r.nmse_db; }));

      for (auth::MetricKind k : cfg.metrics) {
        const AuthResult a = authenticate(k, gen, rec, labels, cfg.attack_ratio(), cfg.auth_window);
        ReportRow row{snr, k, m, a.score.f1, a.score.error_rate, mq};
        rw.row({csv::number(snr), auth::metric_name(k), model_name(m), csv::number(row.f1),
                csv::number(row.error_rate), csv::number(mq.ssim), csv::number(mq.psnr),
                csv::number(mq.cosine), csv::number(mq.nmse_db)});
        rows.push_back(row);
      }
      log << snr << " dB " << model_name(m) << " mean nmse " << mq.nmse_db << " dB, mean ssim "
          << mq.ssim << "\n"
          << std::flush;
    }
  }
  rw.close();
  cw.close();
  log << "report -> " << paths.report_csv().string() << " (" << rows.size() << " rows)\n";
  return rows;
}

}  // namespace apeg::pipeline
