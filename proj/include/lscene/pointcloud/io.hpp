#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lscene/pointcloud/scene_field.hpp"

// SceneField files.
//
// Binary (.scnf), little-endian:
//   "SCNF" | uint32 M | uint32 d_f | M records of (3 + d_f) float32
//   (x, y, z, f_0 .. f_{d_f-1}). The scene id is the file stem.
//
// CSV: one point per line, x,y,z,f_0,...; blank lines, '#' comments and a
// non-numeric header line are skipped.
namespace lscene::pointcloud {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_scnf(const SceneField& field, const std::filesystem::path& path) {
  field.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_scnf: cannot open " + path.string());
  os.write("SCNF", 4);
  const auto m = static_cast<std::uint32_t>(field.size());
  const auto d = static_cast<std::uint32_t>(field.feature_dim);
  os.write(reinterpret_cast<const char*>(&m), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  for (std::size_t i = 0; i < field.size(); ++i) {
    os.write(reinterpret_cast<const char*>(&field.positions[3 * i]), 3 * sizeof(float));
    os.write(reinterpret_cast<const char*>(field.feature(i).data()),
             static_cast<std::streamsize>(d * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write_scnf: write failed for " + path.string());
}

inline SceneField read_scnf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_scnf: cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || std::memcmp(magic.data(), "SCNF", 4) != 0) {
    throw std::runtime_error("read_scnf: bad magic in " + path.string());
  }
  std::uint32_t m = 0, d = 0;
  is.read(reinterpret_cast<char*>(&m), 4);
  is.read(reinterpret_cast<char*>(&d), 4);
  SceneField f;
  f.scene_id = path.stem().string();
  f.feature_dim = d;
  f.positions.resize(std::size_t{m} * 3);
  f.features.resize(std::size_t{m} * d);
  for (std::size_t i = 0; i < m; ++i) {
    is.read(reinterpret_cast<char*>(&f.positions[3 * i]), 3 * sizeof(float));
    is.read(reinterpret_cast<char*>(&f.features[i * d]),
            static_cast<std::streamsize>(d * sizeof(float)));
  }
  if (!is) throw std::runtime_error("read_scnf: truncated file " + path.string());
  f.validate();
  return f;
}

inline SceneField read_csv_field(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv_field: cannot open " + path.string());
  SceneField f;
  f.scene_id = path.stem().string();
  bool width_known = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<float> values;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stof(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw std::runtime_error("read_csv_field: non-numeric cell on line " +
                               std::to_string(line_no));
    }
    if (values.size() < 3) {
      throw std::runtime_error("read_csv_field: fewer than 3 columns on line " +
                               std::to_string(line_no));
    }
    if (!width_known) {
      f.feature_dim = values.size() - 3;
      width_known = true;
    } else if (values.size() != f.feature_dim + 3) {
      throw std::runtime_error("read_csv_field: inconsistent column count on line " +
                               std::to_string(line_no));
    }
    f.push_back({values[0], values[1], values[2]},
                std::span<const float>(values).subspan(3));
  }
  f.validate();
  return f;
}

}  // namespace lscene::pointcloud
