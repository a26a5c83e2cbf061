#include "apeg/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "binary_io.hpp"

namespace apeg::io {

namespace {

using Writer = detail::ByteWriter;
using Reader = detail::ByteReader<TruncatedError>;

void put_matrix(Writer& w, const channel::ChannelMatrix& h, Eigen::Index rows,
                Eigen::Index cols) {
  if (h.rows() != rows || h.cols() != cols) {
    throw DimensionError("sample matrix is " + std::to_string(h.rows()) + "x" +
                         std::to_string(h.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      w.f32(static_cast<float>(h(r, c).real()));
      w.f32(static_cast<float>(h(r, c).imag()));
    }
  }
}

channel::ChannelMatrix get_matrix(Reader& r, Eigen::Index rows, Eigen::Index cols) {
  channel::ChannelMatrix h(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const float re = r.f32();
      const float im = r.f32();
      h(i, j) = {re, im};
    }
  }
  return h;
}

}  // namespace

void write_dataset(const std::filesystem::path& path,
                   const std::vector<channel::ChannelSample>& samples,
                   bool noise_shared) {
  if (samples.empty()) throw DataError("refusing to write an empty dataset");
  const Eigen::Index rows = samples.front().alice_est.rows();
  const Eigen::Index cols = samples.front().alice_est.cols();
  bool all_truth = true;
  for (const auto& s : samples) all_truth = all_truth && s.true_alice.has_value();

  Writer w;
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(rows));
  w.u32(static_cast<std::uint32_t>(cols));
  w.u32(static_cast<std::uint32_t>(samples.size()));
  w.u8(static_cast<std::uint8_t>((all_truth ? kFlagTrueAlice : 0) |
                                 (noise_shared ? kFlagNoiseShared : 0)));
  for (const auto& s : samples) {
    w.u32(static_cast<std::uint32_t>(s.time_slot));
    w.f32(static_cast<float>(s.snr_db));
    w.u32(static_cast<std::uint32_t>(s.eve_ests.size()));
    put_matrix(w, s.alice_est, rows, cols);
    put_matrix(w, s.jack_est, rows, cols);
    if (all_truth) put_matrix(w, *s.true_alice, rows, cols);
    for (const auto& e : s.eve_ests) put_matrix(w, e, rows, cols);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Dataset load_external_dataset(const std::filesystem::path& path,
                              const channel::ArrayConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[8] = {};
  try {
    r.bytes(magic, sizeof magic);
  } catch (const TruncatedError&) {
    throw FormatError("not a CSI dataset (file too short): " + path.string());
  }
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
    throw FormatError("not a CSI dataset (bad magic): " + path.string());
  }
  Dataset ds;
  ds.header.version = r.u32();
  if (ds.header.version != kDatasetVersion) {
    throw VersionError("unsupported dataset version " + std::to_string(ds.header.version));
  }
  ds.header.rows = r.u32();
  ds.header.cols = r.u32();
  ds.header.count = r.u32();
  ds.header.flags = r.u8();
  if (ds.header.rows == 0 || ds.header.cols == 0) {
    throw DimensionError("dataset header has a zero dimension");
  }
  if (expected != nullptr &&
      (ds.header.rows != static_cast<std::uint32_t>(expected->tx_antennas) ||
       ds.header.cols != static_cast<std::uint32_t>(expected->subcarriers))) {
    throw DimensionError("dataset is " + std::to_string(ds.header.rows) + "x" +
                         std::to_string(ds.header.cols) + ", configuration expects " +
                         std::to_string(expected->tx_antennas) + "x" +
                         std::to_string(expected->subcarriers));
  }

  const auto rows = static_cast<Eigen::Index>(ds.header.rows);
  const auto cols = static_cast<Eigen::Index>(ds.header.cols);
  ds.samples.reserve(ds.header.count);
  for (std::uint32_t i = 0; i < ds.header.count; ++i) {
    channel::ChannelSample s;
    s.time_slot = static_cast<int>(r.u32());
    s.snr_db = r.f32();
    const std::uint32_t eves = r.u32();
    s.alice_est = get_matrix(r, rows, cols);
    s.jack_est = get_matrix(r, rows, cols);
    if (ds.header.has_true_alice()) s.true_alice = get_matrix(r, rows, cols);
    for (std::uint32_t e = 0; e < eves; ++e) s.eve_ests.push_back(get_matrix(r, rows, cols));
    ds.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after last sample in " + path.string());
  }
  return ds;
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset) {
  return dataset.parent_path() / (dataset.stem().string() + ".meta.json");
}

void write_sidecar(const std::filesystem::path& dataset, const nlohmann::json& meta) {
  const auto p = sidecar_path(dataset);
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot open " + p.string() + " for writing");
  out << meta.dump(2) << '\n';
}

nlohmann::json read_sidecar(const std::filesystem::path& dataset) {
  const auto p = sidecar_path(dataset);
  std::ifstream in(p);
  if (!in) throw DataError("missing dataset metadata " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad dataset metadata " + p.string() + ": " + e.what());
  }
}

}  // namespace apeg::io
