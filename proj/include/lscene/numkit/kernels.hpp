#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

#include "lscene/numkit/tensor.hpp"

namespace lscene::numkit {

// Multiply-accumulate counter, incremented by every GEMM on this thread.
inline std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

class ScopedMacCount {
 public:
  ScopedMacCount() : start_(mac_counter()) {}
  std::uint64_t elapsed() const { return mac_counter() - start_; }

 private:
  std::uint64_t start_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

}  // namespace detail

enum class Trans { kNo, kYes };

// c (m x n) {=,+=} op(a) * op(b); a is m x k (or k x m when transposed),
// b is k x n (or n x k). Row-major throughout.
template <typename T>
void gemm(const T* a, Trans ta, const T* b, Trans tb, T* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  using detail::ConstMap;
  using detail::MutMap;
  const auto im = static_cast<Eigen::Index>(m);
  const auto ik = static_cast<Eigen::Index>(k);
  const auto in = static_cast<Eigen::Index>(n);
  MutMap<T> out(c, im, in);
  mac_counter() += static_cast<std::uint64_t>(m) * k * n;
  if (k == 0) {
    if (!accumulate) out.setZero();
    return;
  }
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      out.noalias() += lhs * rhs;
    } else {
      out.noalias() = lhs * rhs;
    }
  };
  if (ta == Trans::kNo && tb == Trans::kNo) {
    run(ConstMap<T>(a, im, ik), ConstMap<T>(b, ik, in));
  } else if (ta == Trans::kNo) {
    run(ConstMap<T>(a, im, ik), ConstMap<T>(b, in, ik).transpose());
  } else if (tb == Trans::kNo) {
    run(ConstMap<T>(a, ik, im).transpose(), ConstMap<T>(b, ik, in));
  } else {
    run(ConstMap<T>(a, ik, im).transpose(), ConstMap<T>(b, in, ik).transpose());
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> c = Tensor<T>::zeros(a.rows(), b.cols());
  gemm(a.data().data(), Trans::kNo, b.data().data(), Trans::kNo,
       c.data().data(), a.rows(), a.cols(), b.cols(), false);
  check_finite(c, "matmul");
  return c;
}

// a * b^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  Tensor<T> c = Tensor<T>::zeros(a.rows(), b.rows());
  gemm(a.data().data(), Trans::kNo, b.data().data(), Trans::kYes,
       c.data().data(), a.rows(), a.cols(), b.rows(), false);
  check_finite(c, "matmul_nt");
  return c;
}

// Row-wise softmax with max subtraction. Entries equal to the masked
// sentinel contribute exactly zero.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_matrix(x, "softmax_rows");
  check_finite(x, "softmax_rows input");
  Tensor<T> y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = y.row(r);
    T mx = masked_sentinel<T>();
    for (T v : row) mx = std::max(mx, v);
    if (mx <= masked_sentinel<T>()) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(r) +
                               " of " + shape_str(x.shape()) +
                               " is fully masked");
    }
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const T v = row[c];
      row[c] = v <= masked_sentinel<T>() ? T{0} : std::exp(v - mx);
      total += row[c];
    }
    for (auto& v : row) v /= total;
  }
  return y;
}

inline bool mask_broadcastable(const Shape& mask, const Shape& x) {
  if (mask == x) return true;
  if (mask.size() != 2 || x.size() != 2) return false;
  return (mask[0] == 1 && mask[1] == x[1]) || (mask[0] == x[0] && mask[1] == 1);
}

inline bool mask_at(const Mask& mask, std::size_t r, std::size_t c) {
  const std::size_t mr = mask.rows() == 1 ? 0 : r;
  const std::size_t mc = mask.cols() == 1 ? 0 : c;
  return mask(mr, mc) != 0;
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const Mask& mask, T value) {
  require_matrix(x, "masked_fill");
  if (!mask_broadcastable(mask.shape(), x.shape())) {
    throw ShapeError("masked_fill: mask " + shape_str(mask.shape()) +
                     " does not broadcast to " + shape_str(x.shape()));
  }
  Tensor<T> y = x;
  if (mask.shape() == x.shape()) {
    T* py = y.data().data();
    const std::uint8_t* pm = mask.data().data();
    for (std::size_t i = 0; i < y.size(); ++i) py[i] = pm[i] ? value : py[i];
    return y;
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (mask_at(mask, r, c)) y(r, c) = value;
    }
  }
  return y;
}

}  // namespace lscene::numkit
