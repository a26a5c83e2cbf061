#include "apeg/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "apeg/errors.hpp"
#include "../binary_io.hpp"

namespace apeg::nn {

void save_checkpoint(const std::filesystem::path& path, Variant variant, const NetConfig& net,
                     const ScheduleParams& schedule, const ParamStore& params) {
  apeg::detail::ByteWriter w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(variant));
  const std::string js = net_config_to_json(net).dump();
  w.u32(static_cast<std::uint32_t>(js.size()));
  w.bytes(js.data(), js.size());
  w.f64(schedule.steps);
  w.f64(schedule.beta_start);
  w.f64(schedule.beta_end);
  for (int i = 0; i < params.size(); ++i) {
    const ParamBlock& b = params.block(i);
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.bytes(b.name.data(), b.name.size());
    w.u32(static_cast<std::uint32_t>(b.dims.size()));
    for (int d : b.dims) w.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index k = 0; k < b.value.size(); ++k) w.f32(static_cast<float>(b.value[k]));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  apeg::detail::ByteReader<CheckpointError> r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[8] = {};
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic): " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint32_t tag = r.u32();
  if (tag > 1) throw CheckpointError("unknown variant tag " + std::to_string(tag));
  ck.variant = static_cast<Variant>(tag);
  try {
    ck.net = net_config_from_json(nlohmann::json::parse(r.str(r.u32())));
    ck.net.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad network config in checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid network config in checkpoint: ") + e.what());
  }
  if (ck.net.cross_attn != (ck.variant == Variant::Cadm)) {
    throw CheckpointError("variant tag disagrees with the network config");
  }
  ck.schedule.steps = static_cast<int>(r.f64());
  ck.schedule.beta_start = r.f64();
  ck.schedule.beta_end = r.f64();
  while (r.remaining() > 0) {
    ParamBlock b;
    b.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw CheckpointError("bad rank for block " + b.name);
    Eigen::Index n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      b.dims.push_back(static_cast<int>(r.u32()));
      n *= b.dims.back();
    }
    if (n <= 0 || static_cast<std::size_t>(n) * 4 > r.remaining()) {
      throw CheckpointError("truncated payload for block " + b.name);
    }
    b.value.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) b.value[k] = r.f32();
    ck.blocks.push_back(std::move(b));
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ckpt, ParamStore& params) {
  std::size_t total = 0;
  for (const auto& b : ckpt.blocks) total += static_cast<std::size_t>(b.value.size());
  if (total != params.total() || static_cast<int>(ckpt.blocks.size()) != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(total) + " parameters in " +
                          std::to_string(ckpt.blocks.size()) + " blocks; network has " +
                          std::to_string(params.total()) + " in " + std::to_string(params.size()));
  }
  for (int i = 0; i < params.size(); ++i) {
    ParamBlock& dst = params.block(i);
    const ParamBlock& src = ckpt.blocks[static_cast<std::size_t>(i)];
    if (src.name != dst.name || src.dims != dst.dims) {
      throw CheckpointError("checkpoint block " + src.name + " does not match network block " + dst.name);
    }
    dst.value = src.value;
  }
}

}  // namespace apeg::nn
