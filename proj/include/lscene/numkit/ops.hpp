#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "lscene/numkit/kernels.hpp"
#include "lscene/numkit/tape.hpp"

// Differentiable operations on Var. Each op computes its value with a pure
// kernel and registers a backward rule that accumulates into the parents.
namespace lscene::numkit {

namespace detail {

template <typename T>
void add_into(std::span<T> dst, std::span<const T> src) {
  if (dst.empty()) return;
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul(a.value(), b.value());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [=](Tape<T>& t, std::size_t self) {
                           const T* g = t.grad_of(self).data();
                           if (auto da = t.grad_sink(ia); !da.empty()) {
                             gemm(g, Trans::kNo, t.value(ib).data().data(), Trans::kYes,
                                  da.data(), m, n, k, true);
                           }
                           if (auto db = t.grad_sink(ib); !db.empty()) {
                             gemm(t.value(ia).data().data(), Trans::kYes, g, Trans::kNo,
                                  db.data(), k, m, n, true);
                           }
                         });
}

// a * b^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul_nt(a.value(), b.value());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul_nt", std::move(out), {a, b},
                         [=](Tape<T>& t, std::size_t self) {
                           const T* g = t.grad_of(self).data();
                           if (auto da = t.grad_sink(ia); !da.empty()) {
                             gemm(g, Trans::kNo, t.value(ib).data().data(), Trans::kNo,
                                  da.data(), m, n, k, true);
                           }
                           if (auto db = t.grad_sink(ib); !db.empty()) {
                             gemm(g, Trans::kYes, t.value(ia).data().data(), Trans::kNo,
                                  db.data(), n, m, k, true);
                           }
                         });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::same_shape(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b},
                         [=](Tape<T>& t, std::size_t self) {
                           detail::add_into(t.grad_sink(ia), t.grad_of(self));
                           detail::add_into(t.grad_sink(ib), t.grad_of(self));
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b},
                         [=](Tape<T>& t, std::size_t self) {
                           auto g = t.grad_of(self);
                           if (auto da = t.grad_sink(ia); !da.empty()) {
                             const auto& bv = t.value(ib);
                             for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
                           }
                           if (auto db = t.grad_sink(ib); !db.empty()) {
                             const auto& av = t.value(ia);
                             for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
                           }
                         });
}

// x (m x n) + bias (1 x n) added to every row.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  require_matrix(x.value(), "add_bias");
  if (bias.value().size() != x.cols()) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) +
                     " does not match columns of " + shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out(r, c) += bias.value()[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record("add_bias", std::move(out), {x, bias},
                         [=](Tape<T>& t, std::size_t self) {
                           auto g = t.grad_of(self);
                           detail::add_into(t.grad_sink(ix), g);
                           if (auto db = t.grad_sink(ib); !db.empty()) {
                             for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
                           }
                         });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= s;
  const std::size_t ix = x.id();
  return x.tape().record("scale", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto g = t.grad_of(self);
                           if (auto dx = t.grad_sink(ix); !dx.empty()) {
                             for (std::size_t i = 0; i < g.size(); ++i) dx[i] += s * g[i];
                           }
                         });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id();
  return x.tape().record("relu", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto g = t.grad_of(self);
                           if (auto dx = t.grad_sink(ix); !dx.empty()) {
                             const auto& xv = t.value(ix);
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               if (xv[i] > T{0}) dx[i] += g[i];
                             }
                           }
                         });
}

// tanh approximation of GELU
template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    v = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  const std::size_t ix = x.id();
  return x.tape().record("gelu", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto g = t.grad_of(self);
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           const auto& xv = t.value(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const T v = xv[i];
                             const T th = std::tanh(kC * (v + kA * v * v * v));
                             const T dth = (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
                             dx[i] += g[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * dth);
                           }
                         });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  Tensor<T> out = softmax_rows(x.value());
  const std::size_t ix = x.id();
  const std::size_t n = x.cols();
  return x.tape().record("softmax_rows", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           const auto& p = t.value(self);
                           for (std::size_t r = 0; r < p.rows(); ++r) {
                             T dot = 0;
                             for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * p(r, c);
                             for (std::size_t c = 0; c < n; ++c) {
                               dx[r * n + c] += p(r, c) * (g[r * n + c] - dot);
                             }
                           }
                         });
}

// softmax_rows(masked_fill(x, mask, sentinel)) as one node. Masked entries
// have zero probability, so the plain softmax backward zeroes their gradient.
template <typename T>
Var<T> masked_softmax_rows(const Var<T>& x, const Mask& mask) {
  Tensor<T> out = softmax_rows(masked_fill(x.value(), mask, masked_sentinel<T>()));
  const std::size_t ix = x.id();
  const std::size_t n = x.cols();
  return x.tape().record("masked_softmax_rows", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           const auto& p = t.value(self);
                           for (std::size_t r = 0; r < p.rows(); ++r) {
                             T dot = 0;
                             for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * p(r, c);
                             for (std::size_t c = 0; c < n; ++c) {
                               dx[r * n + c] += p(r, c) * (g[r * n + c] - dot);
                             }
                           }
                         });
}

template <typename T>
Var<T> masked_fill(const Var<T>& x, const Mask& mask, T value) {
  Tensor<T> out = masked_fill(x.value(), mask, value);
  const std::size_t ix = x.id();
  return x.tape().record("masked_fill", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           const std::size_t n = t.value(self).cols();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (!mask_at(mask, i / n, i % n)) dx[i] += g[i];
                           }
                         });
}

// Concatenate matrices along axis 0 (rows) or 1 (columns).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_matrix(p.value(), "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const std::size_t f = axis == 0 ? p.cols() : p.rows();
    if (f != fixed) {
      throw ShapeError("concat: operand " + shape_str(p.shape()) +
                       " incompatible along axis " + std::to_string(axis) +
                       " with " + shape_str(parts[0].shape()));
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  Tensor<T> out = axis == 0 ? Tensor<T>::zeros(total, fixed) : Tensor<T>::zeros(fixed, total);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (axis == 0) {
      std::copy(v.data().begin(), v.data().end(), out.data().begin() + off * fixed);
    } else {
      for (std::size_t r = 0; r < fixed; ++r) {
        std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + off);
      }
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += axis == 0 ? p.rows() : p.cols();
  }
  return parts[0].tape().record(
      "concat", std::move(out), parts,
      [=](Tape<T>& t, std::size_t self) {
        auto g = t.grad_of(self);
        const std::size_t width = axis == 0 ? fixed : total;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto d = t.grad_sink(ids[i]);
          if (d.empty()) continue;
          const auto& v = t.value(ids[i]);
          if (axis == 0) {
            for (std::size_t j = 0; j < v.size(); ++j) d[j] += g[offsets[i] * fixed + j];
          } else {
            const std::size_t w = v.cols();
            for (std::size_t r = 0; r < fixed; ++r) {
              for (std::size_t c = 0; c < w; ++c) d[r * w + c] += g[r * width + offsets[i] + c];
            }
          }
        }
      });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<std::size_t>& index) {
  require_matrix(x.value(), "gather_rows");
  const std::size_t n = x.cols();
  Tensor<T> out = Tensor<T>::zeros(index.size(), n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) +
                       " out of range for " + shape_str(x.shape()));
    }
    auto src = x.value().row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t ix = x.id();
  return x.tape().record("gather_rows", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           for (std::size_t i = 0; i < index.size(); ++i) {
                             for (std::size_t c = 0; c < n; ++c) {
                               dx[index[i] * n + c] += g[i * n + c];
                             }
                           }
                         });
}

// Places the rows of x at `index` in a (total_rows x cols) matrix whose
// other entries hold `fill`. Indices must be distinct.
template <typename T>
Var<T> scatter_rows(const Var<T>& x, const std::vector<std::size_t>& index,
                    std::size_t total_rows, T fill) {
  require_matrix(x.value(), "scatter_rows");
  if (index.size() != x.rows()) {
    throw ShapeError("scatter_rows: " + std::to_string(index.size()) +
                     " indices for " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols();
  Tensor<T> out = Tensor<T>::filled(total_rows, n, fill);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= total_rows) throw ShapeError("scatter_rows: index out of range");
    auto src = x.value().row(i);
    std::copy(src.begin(), src.end(), out.row(index[i]).begin());
  }
  const std::size_t ix = x.id();
  return x.tape().record("scatter_rows", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           for (std::size_t i = 0; i < index.size(); ++i) {
                             for (std::size_t c = 0; c < n; ++c) {
                               dx[i * n + c] += g[index[i] * n + c];
                             }
                           }
                         });
}

// Columns [begin, end) of x.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
  require_matrix(x.value(), "slice_cols");
  if (begin > end || end > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t n = x.cols(), w = end - begin, m = x.rows();
  Tensor<T> out = Tensor<T>::zeros(m, w);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = x.value()(r, begin + c);
  }
  const std::size_t ix = x.id();
  return x.tape().record("slice_cols", std::move(out), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           for (std::size_t r = 0; r < m; ++r) {
                             for (std::size_t c = 0; c < w; ++c) dx[r * n + begin + c] += g[r * w + c];
                           }
                         });
}

// Row-wise layer normalization with learned gain and shift (both 1 x n).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& shift,
                  T eps = T(1e-5)) {
  require_matrix(x.value(), "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.value().size() != n || shift.value().size() != n) {
    throw ShapeError("layer_norm: gain/shift do not match " + shape_str(x.shape()));
  }
  Tensor<T> out = Tensor<T>::zeros(m, n);
  std::vector<T> xhat(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = x.value().row(r);
    T mean = 0;
    for (T v : row) mean += v;
    mean /= static_cast<T>(n);
    T var = 0;
    for (T v : row) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (row[c] - mean) * inv_std[r];
      out(r, c) = xhat[r * n + c] * gain.value()[c] + shift.value()[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ibeta = shift.id();
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, shift},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        auto g = t.grad_of(self);
        if (auto dg = t.grad_sink(ig); !dg.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) dg[i % n] += g[i] * xhat[i];
        }
        if (auto db = t.grad_sink(ibeta); !db.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
        }
        auto dx = t.grad_sink(ix);
        if (dx.empty()) return;
        const auto& gv = t.value(ig);
        for (std::size_t r = 0; r < m; ++r) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t c = 0; c < n; ++c) {
            const T dy = g[r * n + c] * gv[c];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat[r * n + c];
          }
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t c = 0; c < n; ++c) {
            const T dy = g[r * n + c] * gv[c];
            dx[r * n + c] += inv_std[r] * (dy - inv_n * sum_dy - xhat[r * n + c] * inv_n * sum_dy_xhat);
          }
        }
      });
}

// Row lookup into an embedding table.
template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<std::size_t>& ids) {
  for (std::size_t id : ids) {
    if (id >= table.rows()) {
      throw ShapeError("embedding: token id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(table.rows()));
    }
  }
  return gather_rows(table, ids);
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total = 0;
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.id();
  return x.tape().record("sum", Tensor<T>::scalar(total), {x},
                         [=](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           const T g = t.grad_of(self)[0];
                           for (auto& v : dx) v += g;
                         });
}

// Mean token cross-entropy of logits rows against target ids.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& targets) {
  require_matrix(logits.value(), "cross_entropy");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || m == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(logits.shape()));
  }
  Tensor<T> probs = softmax_rows(logits.value());
  T loss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] >= n) throw ShapeError("cross_entropy: target out of vocabulary");
    const auto row = logits.value().row(r);
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T total = 0;
    for (T v : row) total += std::exp(v - mx);
    loss += -(row[targets[r]] - mx - std::log(total));
  }
  loss /= static_cast<T>(m);
  const std::size_t il = logits.id();
  return logits.tape().record(
      "cross_entropy", Tensor<T>::scalar(loss), {logits},
      [=, probs = std::move(probs)](Tape<T>& t, std::size_t self) {
        auto dl = t.grad_sink(il);
        if (dl.empty()) return;
        const T g = t.grad_of(self)[0] / static_cast<T>(m);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            dl[r * n + c] += g * (probs(r, c) - (c == targets[r] ? T(1) : T(0)));
          }
        }
      });
}

// x holds `groups` consecutive blocks of `group_size` rows; returns the
// column-wise max of each block (groups x cols). Ties route the gradient to
// the first maximal row.
template <typename T>
Var<T> max_pool_groups(const Var<T>& x, std::size_t group_size) {
  require_matrix(x.value(), "max_pool_groups");
  if (group_size == 0 || x.rows() % group_size != 0) {
    throw ShapeError("max_pool_groups: " + shape_str(x.shape()) +
                     " is not a whole number of groups of " + std::to_string(group_size));
  }
  const std::size_t groups = x.rows() / group_size, n = x.cols();
  Tensor<T> out = Tensor<T>::zeros(groups, n);
  std::vector<std::size_t> argmax(groups * n);
  const auto& xv = x.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t best = gi * group_size;
      for (std::size_t r = best + 1; r < (gi + 1) * group_size; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;
      }
      argmax[gi * n + c] = best;
      out(gi, c) = xv(best, c);
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record("max_pool_groups", std::move(out), {x},
                         [=, argmax = std::move(argmax)](Tape<T>& t, std::size_t self) {
                           auto dx = t.grad_sink(ix);
                           if (dx.empty()) return;
                           auto g = t.grad_of(self);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             dx[argmax[i] * n + i % n] += g[i];
                           }
                         });
}

}  // namespace lscene::numkit
