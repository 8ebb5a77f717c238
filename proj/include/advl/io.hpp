#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "advl/common.hpp"
#include "advl/network.hpp"
#include "advl/train.hpp"

namespace advl {

// ---- little-endian primitives ----

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

template <class T>
void put_le(std::string& out, T v) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos, const char* what) {
  if (pos + sizeof(T) > in.size())
    fail(errc::ingest, std::string("model file truncated while reading ") + what + " at offset " +
                           std::to_string(pos));
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  pos += sizeof(T);
  return v;
}

// CRC-32 (IEEE 802.3, polynomial 0xEDB88320), table-driven.
inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int j = 0; j < 8; ++j) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(errc::io, "read failure on " + path);
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot create " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(errc::io, "write failure on " + path);
}

}  // namespace detail

// ---- model file ----
// Layout: magic "ADVL", u32 version, payload, u32 CRC-32 of the payload.
// Payload: f64 temperature, u32 classes, u32 input rank + dims, u32 layer
// count, then per layer: u32 kind, u32 filters, u32 units, u64-prefixed
// weight and bias blobs. All integers and doubles little-endian.

inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(const Network& net, const std::string& path) {
  std::string payload;
  detail::put_le(payload, net.temperature);
  detail::put_le(payload, static_cast<std::uint32_t>(net.classes));
  detail::put_le(payload, static_cast<std::uint32_t>(net.input_shape.size()));
  for (std::size_t d : net.input_shape) detail::put_le(payload, static_cast<std::uint32_t>(d));
  detail::put_le(payload, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    detail::put_le(payload, static_cast<std::uint32_t>(l.spec.kind));
    detail::put_le(payload, static_cast<std::uint32_t>(l.spec.filters));
    detail::put_le(payload, static_cast<std::uint32_t>(l.spec.units));
    detail::put_le(payload, static_cast<std::uint64_t>(l.weights.size()));
    for (double v : l.weights.data) detail::put_le(payload, v);
    detail::put_le(payload, static_cast<std::uint64_t>(l.bias.size()));
    for (double v : l.bias.data) detail::put_le(payload, v);
  }

  std::string out = "ADVL";
  detail::put_le(out, kModelVersion);
  out += payload;
  detail::put_le(out, detail::crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));
  detail::write_file(path, out);
}

inline Network load_model(const std::string& path) {
  const std::string raw = detail::read_file(path);
  if (raw.size() < 12 || raw.compare(0, 4, "ADVL") != 0)
    fail(errc::ingest, "not a model file (bad magic): " + path);
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(raw, pos, "version");
  if (version != kModelVersion)
    fail(errc::ingest, "unsupported model version " + std::to_string(version) + " in " + path);

  const std::size_t payload_begin = pos;
  const std::size_t payload_end = raw.size() - 4;
  if (payload_end < payload_begin) fail(errc::ingest, "model file truncated: " + path);

  Network net;
  net.temperature = detail::get_le<double>(raw, pos, "temperature");
  if (!(net.temperature > 0.0)) fail(errc::ingest, "model temperature must be positive: " + path);
  net.classes = detail::get_le<std::uint32_t>(raw, pos, "class count");
  const auto rank = detail::get_le<std::uint32_t>(raw, pos, "input rank");
  if (rank == 0 || rank > 4) fail(errc::ingest, "implausible input rank in " + path);
  for (std::uint32_t i = 0; i < rank; ++i)
    net.input_shape.push_back(detail::get_le<std::uint32_t>(raw, pos, "input dim"));
  const auto layer_count = detail::get_le<std::uint32_t>(raw, pos, "layer count");
  std::vector<std::size_t> cur = net.input_shape;
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    Layer l;
    const auto kind = detail::get_le<std::uint32_t>(raw, pos, "layer kind");
    if (kind > 3) fail(errc::ingest, "unknown layer kind " + std::to_string(kind) + " in " + path);
    l.spec.kind = static_cast<LayerKind>(kind);
    l.spec.filters = detail::get_le<std::uint32_t>(raw, pos, "filters");
    l.spec.units = detail::get_le<std::uint32_t>(raw, pos, "units");
    const auto wn = detail::get_le<std::uint64_t>(raw, pos, "weight count");
    std::vector<std::size_t> wshape;
    switch (l.spec.kind) {
      case LayerKind::conv3x3:
        wshape = {l.spec.filters, cur[0], 3, 3};
        break;
      case LayerKind::maxpool2x2:
        break;
      case LayerKind::dense_relu:
      case LayerKind::dense_linear:
        wshape = {l.spec.units, Tensor::count(cur)};
        break;
    }
    if (wn != Tensor::count(wshape) && !(wshape.empty() && wn == 0))
      fail(errc::ingest, "weight blob size disagrees with layer geometry in " + path);
    if (!wshape.empty()) {
      l.weights = Tensor(wshape);
      for (std::size_t i = 0; i < wn; ++i) l.weights.data[i] = detail::get_le<double>(raw, pos, "weight");
    }
    const auto bn = detail::get_le<std::uint64_t>(raw, pos, "bias count");
    if (!wshape.empty()) {
      const std::size_t expect = l.spec.kind == LayerKind::conv3x3 ? l.spec.filters : l.spec.units;
      if (bn != expect) fail(errc::ingest, "bias blob size disagrees with layer geometry in " + path);
      l.bias = Tensor({bn});
      for (std::size_t i = 0; i < bn; ++i) l.bias.data[i] = detail::get_le<double>(raw, pos, "bias");
    } else if (bn != 0) {
      fail(errc::ingest, "pooling layer must not carry parameters in " + path);
    }
    cur = layer_output_shape(l.spec, cur);
    net.layers.push_back(std::move(l));
  }
  if (pos != payload_end) fail(errc::ingest, "trailing bytes in model payload: " + path);
  const auto stored = detail::get_le<std::uint32_t>(raw, pos, "checksum");
  const std::uint32_t actual = detail::crc32(
      reinterpret_cast<const unsigned char*>(raw.data()) + payload_begin, payload_end - payload_begin);
  if (stored != actual)
    fail(errc::ingest, "model checksum mismatch in " + path + " (file corrupted)");
  if (cur.size() != 1 || cur[0] != net.classes)
    fail(errc::ingest, "model layers do not produce the declared class count: " + path);
  return net;
}

// ---- IDX ingestion ----
// Big-endian headers: images 0x00000803 (count, rows, cols), labels
// 0x00000801 (count). Pixels are bytes scaled to [0,1].

namespace detail {

inline std::uint32_t get_be32(const std::string& in, std::size_t pos, const std::string& path) {
  if (pos + 4 > in.size())
    fail(errc::ingest, path + ": truncated at offset " + std::to_string(pos));
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + 3]));
}

}  // namespace detail

// Loads an IDX image/label pair into a dataset of [1 x rows x cols] tensors.
// `limit` of 0 keeps everything.
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               std::size_t limit = 0, std::size_t classes = 10) {
  const std::string img = detail::read_file(images_path);
  const std::string lab = detail::read_file(labels_path);

  if (detail::get_be32(img, 0, images_path) != 0x00000803u)
    fail(errc::ingest, images_path + ": bad magic at offset 0 (want 0x00000803)");
  const std::size_t n_img = detail::get_be32(img, 4, images_path);
  const std::size_t rows = detail::get_be32(img, 8, images_path);
  const std::size_t cols = detail::get_be32(img, 12, images_path);
  if (img.size() != 16 + n_img * rows * cols)
    fail(errc::ingest, images_path + ": size " + std::to_string(img.size()) + " disagrees with header (" +
                           std::to_string(16 + n_img * rows * cols) + " expected)");

  if (detail::get_be32(lab, 0, labels_path) != 0x00000801u)
    fail(errc::ingest, labels_path + ": bad magic at offset 0 (want 0x00000801)");
  const std::size_t n_lab = detail::get_be32(lab, 4, labels_path);
  if (lab.size() != 8 + n_lab)
    fail(errc::ingest, labels_path + ": size disagrees with header count");
  if (n_img != n_lab)
    fail(errc::ingest, images_path + " and " + labels_path + " disagree on sample count");

  const std::size_t n = limit == 0 ? n_img : std::min(limit, n_img);
  LabeledDataset ds;
  ds.classes = classes;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor t({1, rows, cols});
    const unsigned char* px = reinterpret_cast<const unsigned char*>(img.data()) + 16 + i * rows * cols;
    for (std::size_t j = 0; j < rows * cols; ++j) t.data[j] = static_cast<double>(px[j]) / 255.0;
    const auto label = static_cast<std::size_t>(static_cast<unsigned char>(lab[8 + i]));
    if (label >= classes)
      fail(errc::ingest, labels_path + ": label " + std::to_string(label) + " out of range at offset " +
                             std::to_string(8 + i));
    ds.images.push_back(std::move(t));
    ds.labels.push_back(label);
  }
  return ds;
}

// ---- CIFAR-10 binary batches ----
// Each record: 1 label byte + 3072 bytes (32x32 red plane, then green, blue).

inline LabeledDataset load_cifar10(const std::vector<std::string>& batch_paths, std::size_t limit = 0) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  LabeledDataset ds;
  ds.classes = 10;
  for (const std::string& path : batch_paths) {
    const std::string raw = detail::read_file(path);
    if (raw.size() % kRecord != 0)
      fail(errc::ingest, path + ": size " + std::to_string(raw.size()) + " is not a multiple of " +
                             std::to_string(kRecord));
    const std::size_t n = raw.size() / kRecord;
    for (std::size_t i = 0; i < n; ++i) {
      if (limit != 0 && ds.images.size() >= limit) return ds;
      const unsigned char* rec = reinterpret_cast<const unsigned char*>(raw.data()) + i * kRecord;
      const std::size_t label = rec[0];
      if (label >= 10)
        fail(errc::ingest,
             path + ": label " + std::to_string(label) + " out of range at offset " + std::to_string(i * kRecord));
      Tensor t({3, 32, 32});
      for (std::size_t j = 0; j < 3 * 32 * 32; ++j) t.data[j] = static_cast<double>(rec[1 + j]) / 255.0;
      ds.images.push_back(std::move(t));
      ds.labels.push_back(label);
    }
  }
  return ds;
}

// ---- synthetic data ----
// Gaussian blobs on the unit hypercube: class means drawn uniformly, samples
// scattered around them and clamped to [0,1]. `spread` below ~0.15 keeps the
// classes cleanly separable, which makes for fast-converging test fixtures.

inline LabeledDataset synth_blobs(std::size_t samples, std::size_t dims, std::size_t classes,
                                  double spread, std::uint64_t seed) {
  if (classes < 2 || dims == 0 || samples == 0) fail(errc::config, "synth_blobs: degenerate request");
  Rng rng(seed);
  std::vector<std::vector<double>> means(classes, std::vector<double>(dims));
  for (auto& m : means)
    for (double& v : m) v = rng.uniform(0.2, 0.8);
  LabeledDataset ds;
  ds.classes = classes;
  ds.images.reserve(samples);
  ds.labels.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t cls = i % classes;
    Tensor t({dims});
    for (std::size_t d = 0; d < dims; ++d) t.data[d] = clamp01(means[cls][d] + rng.normal(0.0, spread));
    ds.images.push_back(std::move(t));
    ds.labels.push_back(cls);
  }
  return ds;
}

}  // namespace advl
