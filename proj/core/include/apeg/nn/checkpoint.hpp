#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "apeg/nn/param_store.hpp"
#include "apeg/nn/unet.hpp"

namespace apeg::nn {

inline constexpr char kCheckpointMagic[8] = {'A', 'P', 'E', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ScheduleParams {
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool operator==(const ScheduleParams&) const = default;
};

struct Checkpoint {
  Variant variant = Variant::Ccmdm;
  NetConfig net;
  ScheduleParams schedule;
  std::vector<ParamBlock> blocks;  // values only; grads are empty
};

// Layout: magic | u32 version | u32 variant | u32 json length | NetConfig JSON
// | f64 T | f64 beta_start | f64 beta_end | blocks until end of file, each
// u32 name length | name | u32 rank | u32 dims... | f32 values.
void save_checkpoint(const std::filesystem::path& path, Variant variant, const NetConfig& net,
                     const ScheduleParams& schedule, const ParamStore& params);

// Parses and checks the file. Throws CheckpointError on any defect.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into a store built from the same NetConfig; the
// block names, shapes and total parameter count must all match.
void apply_checkpoint(const Checkpoint& ckpt, ParamStore& params);

}  // namespace apeg::nn
