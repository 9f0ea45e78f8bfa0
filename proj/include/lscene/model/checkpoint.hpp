#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lscene/model/params.hpp"
#include "lscene/numkit/dump.hpp"

// Checkpoint = binary tensor file plus a JSON sidecar `<file>.json` holding
// the ModelConfig.
//
// Binary, little-endian:
//   "LSCK" | uint32 version (1) | uint32 count |
//   count entries of: uint32 name_len | name bytes | uint32 rows | uint32 cols |
//                     rows * cols float32
// Entries are in name order.
namespace lscene::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  using numkit::detail::write_u32;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("save_checkpoint: cannot open " + path.string());
  os.write("LSCK", 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rows()));
    write_u32(os, static_cast<std::uint32_t>(t.cols()));
    for (T v : t.data()) {
      const float f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!os) throw CheckpointError("save_checkpoint: write failed for " + path.string());
  std::ofstream js(sidecar_path(path));
  nlohmann::json j = {{"format_version", kCheckpointVersion}, {"config", params.cfg}};
  if (!extra.empty()) j["extra"] = extra;
  js << j.dump(2) << '\n';
  if (!js) throw CheckpointError("save_checkpoint: cannot write sidecar for " + path.string());
}

inline nlohmann::json read_sidecar(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw CheckpointError("load_checkpoint: missing sidecar " + sidecar_path(path).string());
  return nlohmann::json::parse(js);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
  using numkit::detail::read_u32;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || std::memcmp(magic.data(), "LSCK", 4) != 0) {
    throw CheckpointError("load_checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("load_checkpoint: unsupported version " + std::to_string(version));
  }
  ModelParams<T> p;
  p.cfg = read_sidecar(path).at("config").get<ModelConfig>();
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(read_u32(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const std::uint32_t rows = read_u32(is), cols = read_u32(is);
    Tensor<T> t = Tensor<T>::zeros(rows, cols);
    for (auto& v : t.data()) {
      float f = 0;
      is.read(reinterpret_cast<char*>(&f), sizeof f);
      v = static_cast<T>(f);
    }
    if (!is) throw CheckpointError("load_checkpoint: truncated file " + path.string());
    p.tensors.emplace(std::move(name), std::move(t));
  }
  const auto expected = init_params<T>(p.cfg, 0);
  for (const auto& [k, t] : expected.tensors) {
    auto it = p.tensors.find(k);
    if (it == p.tensors.end() || it->second.shape() != t.shape()) {
      throw CheckpointError("load_checkpoint: tensor '" + k + "' missing or misshapen");
    }
  }
  return p;
}

}  // namespace lscene::model
