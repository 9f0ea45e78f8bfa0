#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "lscene/numkit/tensor.hpp"

// Flat little-endian tensor dump for debugging.
//
//   bytes 0..3   magic "NKT4" (float32 payload) or "NKT8" (float64 payload)
//   bytes 4..7   rank (1 or 2), uint32
//   bytes 8..11  extent 0, uint32
//   bytes 12..15 extent 1, uint32 (1 for rank-1 tensors)
//   payload      row-major scalars
namespace lscene::numkit {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("unexpected end of file");
  return v;
}

}  // namespace detail

template <typename T>
void dump_tensor(const Tensor<T>& t, const std::string& path) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (t.rank() == 0 || t.rank() > 2) {
    throw ShapeError("dump_tensor: only rank 1 or 2 supported, got " + shape_str(t.shape()));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dump_tensor: cannot open " + path);
  os.write(sizeof(T) == 4 ? "NKT4" : "NKT8", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  detail::write_u32(os, static_cast<std::uint32_t>(t.shape()[0]));
  detail::write_u32(os, static_cast<std::uint32_t>(t.rank() == 2 ? t.shape()[1] : 1));
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tensor: cannot open " + path);
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  const char* want = sizeof(T) == 4 ? "NKT4" : "NKT8";
  if (!is || std::memcmp(magic.data(), want, 4) != 0) {
    throw std::runtime_error("load_tensor: bad magic in " + path);
  }
  const auto rank = detail::read_u32(is);
  const auto e0 = detail::read_u32(is);
  const auto e1 = detail::read_u32(is);
  Shape shape = rank == 1 ? Shape{e0} : Shape{e0, e1};
  std::vector<T> data(element_count(shape));
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!is) throw std::runtime_error("load_tensor: truncated payload in " + path);
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace lscene::numkit
