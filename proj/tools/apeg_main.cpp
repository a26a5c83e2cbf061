#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "apeg/config.hpp"
#include "apeg/errors.hpp"
#include "apeg/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kCheckpoint = 4, kInternal = 5 };

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::optional<std::string> variant;
  std::optional<std::string> out;
};

int run(const Options& o) {
  using namespace apeg;
  std::optional<config::Preset> preset;
  if (o.preset) preset = config::parse_preset(*o.preset);
  config::RunConfig cfg = config::load_config(o.config_path, preset);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.scenario.rng_seed = *o.seed;
  }
  if (o.out) cfg.out_dir = *o.out;
  cfg.validate();

  auto model = [&](pipeline::Model fallback) {
    return o.variant ? pipeline::parse_model(*o.variant) : fallback;
  };
  if (o.command == "gen-data") {
    pipeline::cmd_gen_data(cfg, std::cout);
  } else if (o.command == "train") {
    if (!o.variant) throw ConfigError("train needs --variant");
    pipeline::cmd_train(cfg, model(pipeline::Model::Cadm), std::cout);
  } else if (o.command == "generate") {
    pipeline::cmd_generate(cfg, model(pipeline::Model::Cadm), std::cout);
  } else if (o.command == "auth") {
    pipeline::cmd_auth(cfg, model(pipeline::Model::Cadm), std::cout);
  } else if (o.command == "eval") {
    pipeline::cmd_eval(cfg, std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physical-layer authentication by generated CSI fingerprints"};
  app.require_subcommand(1, 1);
  Options o;

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "Simulate the channel data set and write the train/test splits"},
      {"train", "Train a generator (ccmdm, cadm) or run the oracle self-test"},
      {"generate", "Generate Alice fingerprints for the test split"},
      {"auth", "Authenticate the test stream against generated fingerprints"},
      {"eval", "Evaluate every model over the SNR grid"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "Flat key = value configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the run seed");
    sub->add_option("--preset", o.preset, "Defaults to start from")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--variant", o.variant, "Model: ccmdm, cadm, ca or oracle (default cadm)")
        ->check(CLI::IsMember({"ccmdm", "cadm", "ca", "oracle"}));
    sub->add_option("--out", o.out, "Override the output directory");
    sub->callback([&o, sub] { o.command = sub->get_name(); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    return run(o);
  } catch (const apeg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const apeg::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const apeg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const apeg::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
