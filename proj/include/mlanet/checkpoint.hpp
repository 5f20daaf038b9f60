#pragma once

// Checkpoint file: 8-byte magic, JSON header (format version, model
// config, array manifest, reference energies, RNG state, free-form extra
// section), a little-endian float64 blob, and an FNV-1a checksum of the
// blob. Loads are all-or-nothing: version and checksum are verified before
// any parameter is touched, and writes go through a temp file + rename.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlanet/config.hpp"
#include "mlanet/errors.hpp"
#include "mlanet/model.hpp"

namespace mlanet {

inline constexpr char kCheckpointMagic[9] = "MLNTCKPT";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline uint64_t fnv1a(const unsigned char* data, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline void put_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t get_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void put_f64_le(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(out, bits);
}

inline double get_f64_le(const unsigned char* p) {
  uint64_t bits = get_u64_le(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

struct CheckpointData {
  json header;
  ModelConfig model_config;
  std::map<std::string, std::vector<double>> arrays;  // params + extras
  std::map<int, double> reference_energies;
  std::string rng_state;
  json extra;  // optimizer step counts, epoch counters, etc.
};

// Extra named arrays (optimizer moments and the like) ride alongside the
// model parameters in the same blob.
inline void save_checkpoint(
    const std::string& path, Model& model,
    const std::vector<std::pair<std::string, const std::vector<double>*>>&
        extra_arrays = {},
    const std::string& rng_state = "", const json& extra = json::object()) {
  json manifest = json::array();
  std::string blob;
  int64_t offset = 0;
  auto append = [&](const std::string& name, const Shape& shape,
                    const std::vector<double>& vals) {
    manifest.push_back(
        {{"name", name}, {"shape", shape}, {"offset", offset}});
    for (double v : vals) detail::put_f64_le(blob, v);
    offset += static_cast<int64_t>(vals.size());
  };
  for (const Parameter* p : model.parameters())
    append(p->name, p->shape, p->value);
  for (const auto& [name, vals] : extra_arrays)
    append(name, {static_cast<int64_t>(vals->size())}, *vals);

  json e0 = json::object();
  for (const auto& [z, e] : model.reference_energies())
    e0[std::to_string(z)] = e;

  json header{{"format_version", kCheckpointVersion},
              {"model", model_config_to_json(model.config())},
              {"manifest", manifest},
              {"reference_energies", e0},
              {"rng_state", rng_state},
              {"extra", extra}};
  std::string hs = header.dump();

  std::string out;
  out.append(kCheckpointMagic, 8);
  detail::put_u64_le(out, hs.size());
  out += hs;
  uint64_t checksum = detail::fnv1a(
      reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  out += blob;
  detail::put_u64_le(out, checksum);

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::string raw((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 16 || std::memcmp(raw.data(), kCheckpointMagic, 8) != 0)
    throw IoError(path + ": not a checkpoint file (bad magic)");
  uint64_t hlen = detail::get_u64_le(p + 8);
  if (16 + hlen + 8 > raw.size())
    throw IoError(path + ": truncated checkpoint header");
  json header;
  try {
    header = json::parse(raw.substr(16, hlen));
  } catch (const json::exception& e) {
    throw IoError(path + ": corrupt header: " + e.what());
  }
  int version = header.value("format_version", -1);
  if (version != kCheckpointVersion)
    throw IoError(path + ": format version " + std::to_string(version) +
                  " is not supported (expected " +
                  std::to_string(kCheckpointVersion) + ")");

  size_t blob_off = 16 + hlen;
  size_t blob_len = raw.size() - blob_off - 8;
  if (blob_len % 8 != 0)
    throw IoError(path + ": blob length is not a multiple of 8");
  uint64_t stored = detail::get_u64_le(p + raw.size() - 8);
  uint64_t actual = detail::fnv1a(p + blob_off, blob_len);
  if (stored != actual)
    throw IoError(path + ": checksum mismatch, checkpoint is corrupted");

  CheckpointData out;
  out.header = header;
  out.model_config = model_config_from_json(header.at("model"));
  out.rng_state = header.value("rng_state", std::string());
  out.extra = header.value("extra", json::object());
  for (auto it = header.at("reference_energies").begin();
       it != header.at("reference_energies").end(); ++it)
    out.reference_energies[std::stoi(it.key())] = it.value().get<double>();

  int64_t total = static_cast<int64_t>(blob_len / 8);
  for (const auto& entry : header.at("manifest")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    int64_t off = entry.at("offset").get<int64_t>();
    int64_t n = numel(shape);
    if (off < 0 || off + n > total)
      throw IoError(path + ": manifest entry '" + name +
                    "' points outside the blob");
    std::vector<double> vals(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      vals[static_cast<size_t>(i)] =
          detail::get_f64_le(p + blob_off + 8 * (off + i));
    out.arrays[name] = std::move(vals);
  }
  return out;
}

// Copies checkpoint values into an existing model. The architectures must
// match exactly; on mismatch the error message carries both configs.
inline void load_into_model(Model& model, const CheckpointData& ckpt) {
  json mine = model_config_to_json(model.config());
  json theirs = model_config_to_json(ckpt.model_config);
  if (mine != theirs)
    throw IoError("checkpoint architecture mismatch:\n  model:      " +
                  mine.dump() + "\n  checkpoint: " + theirs.dump());
  for (Parameter* param : model.parameters()) {
    auto it = ckpt.arrays.find(param->name);
    if (it == ckpt.arrays.end())
      throw IoError("checkpoint is missing parameter '" + param->name + "'");
    if (it->second.size() != param->value.size())
      throw IoError("checkpoint parameter '" + param->name +
                    "' has wrong size");
    param->value = it->second;
  }
  model.reference_energies() = ckpt.reference_energies;
}

inline std::unique_ptr<Model> model_from_checkpoint(const std::string& path) {
  CheckpointData ckpt = load_checkpoint(path);
  auto model = std::make_unique<Model>(ckpt.model_config);
  load_into_model(*model, ckpt);
  return model;
}

}  // namespace mlanet
