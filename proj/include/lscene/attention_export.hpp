#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "lscene/attention.hpp"
#include "lscene/selector.hpp"

namespace lscene::attention {

// row,col,weight of the head-aggregated full weights, dense columns included.
inline void write_record_csv(std::ostream& os, const AttentionRecord& rec, HeadAgg agg) {
  const std::size_t cols = rec.weights.front().cols();
  const auto w = detail::aggregate_heads(rec.weights, cols, agg);
  os << "row,col,weight\n";
  os.precision(17);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) os << r << ',' << c << ',' << w(r, c) << '\n';
  }
}

// Binary PGM (P5) of `map`, each row min-max normalized to 0..255.
inline void write_pgm(const std::filesystem::path& path, const Tensor<double>& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
  os << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  for (std::size_t r = 0; r < map.rows(); ++r) {
    const auto px = selector::normalize_to_u8(map.row(r));
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  }
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  PgmImage img;
  is >> magic >> img.width >> img.height >> maxval;
  if (!is || magic != "P5" || maxval != 255) {
    throw std::runtime_error("read_pgm: unsupported file " + path.string());
  }
  is.get();
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw std::runtime_error("read_pgm: truncated file " + path.string());
  return img;
}

}  // namespace lscene::attention
