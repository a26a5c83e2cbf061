#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "apeg/channel_sim.hpp"
#include "apeg/errors.hpp"

namespace apeg::io {

// Binary CSI container. Layout (little-endian):
//   "APEGCSI1" | u32 version | u32 M | u32 K | u32 count | u8 flags
//   per sample: u32 slot | f32 snr_db | u32 num_eves |
//               alice, jack, [true_alice], eves... as M*K (re, im) f32 pairs
inline constexpr char kDatasetMagic[8] = {'A', 'P', 'E', 'G', 'C', 'S', 'I', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint8_t kFlagTrueAlice = 0x1;
inline constexpr std::uint8_t kFlagNoiseShared = 0x2;

class FormatError : public DataError {
 public:
  using DataError::DataError;
};
class VersionError : public DataError {
 public:
  using DataError::DataError;
};
class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t count = 0;
  std::uint8_t flags = 0;

  bool has_true_alice() const { return flags & kFlagTrueAlice; }
  bool noise_shared() const { return flags & kFlagNoiseShared; }
};

struct Dataset {
  DatasetHeader header;
  std::vector<channel::ChannelSample> samples;
};

// true_alice is written only when every sample carries it.
void write_dataset(const std::filesystem::path& path,
                   const std::vector<channel::ChannelSample>& samples,
                   bool noise_shared);

// Reads the whole file before returning, so a bad file never yields a
// partial sample list. When `expected` is given the header dimensions must
// match it.
Dataset load_external_dataset(const std::filesystem::path& path,
                              const channel::ArrayConfig* expected = nullptr);

// `<dir>/<stem>.meta.json` next to the container.
std::filesystem::path sidecar_path(const std::filesystem::path& dataset);
void write_sidecar(const std::filesystem::path& dataset, const nlohmann::json& meta);
nlohmann::json read_sidecar(const std::filesystem::path& dataset);

}  // namespace apeg::io
