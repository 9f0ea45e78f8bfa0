#pragma once

#include <cmath>
#include <cstring>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace lscene::numkit {

using Shape = std::vector<std::size_t>;

// Error family raised by the numerical kernel. Messages always name the
// offending op and the shapes involved.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateRowError : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFiniteError : public NumericError {
 public:
  using NumericError::NumericError;
};

class ContractError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor with value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(element_count(shape_), T{0}) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("Tensor: shape " + shape_str(shape_) + " holds " +
                       std::to_string(element_count(shape_)) +
                       " elements but data has " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor(Shape{rows, cols});
  }

  static Tensor filled(std::size_t rows, std::size_t cols, T value) {
    return Tensor(Shape{rows, cols}, std::vector<T>(rows * cols, value));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, {value}); }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("Tensor::matrix: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.size() < 2) return 1;
    return element_count(shape_) / shape_[0];
  }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  T item() const {
    if (data_.size() != 1) {
      throw ContractError("Tensor::item on shape " + shape_str(shape_));
    }
    return data_[0];
  }

  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * cols(), cols());
  }
  std::span<T> row(std::size_t r) {
    return std::span<T>(data_).subspan(r * cols(), cols());
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  std::vector<T> data_{T{0}};
};

// Boolean masks use bytes: std::vector<bool> has no contiguous storage.
using Mask = Tensor<std::uint8_t>;

template <typename T>
void check_finite(const Tensor<T>& t, std::string_view op) {
  if constexpr (std::is_floating_point_v<T>) {
    // Branch-free scan first; the exponent field is all ones only for inf and NaN.
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    constexpr Bits exp_mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
    Bits bad = 0;
    const T* p = t.data().data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      Bits b;
      std::memcpy(&b, p + i, sizeof(T));
      bad |= Bits((b & exp_mask) == exp_mask);
    }
    if (!bad) return;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) {
        throw NonFiniteError(std::string(op) + ": non-finite value at flat index " +
                             std::to_string(i) + " of " + shape_str(t.shape()));
      }
    }
  }
}

template <typename T>
void require_matrix(const Tensor<T>& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_str(t.shape()));
  }
}

// Attention sentinel: the most negative finite value, so row-max subtraction
// never produces inf - inf.
template <typename T>
constexpr T masked_sentinel() {
  return std::numeric_limits<T>::lowest();
}

}  // namespace lscene::numkit
