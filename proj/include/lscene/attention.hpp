#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lscene/config.hpp"
#include "lscene/numkit.hpp"

// Causal multi-head self-attention over [vision | text segments], and the
// magnifier variant whose keys and values are extended with dense tokens that
// only text rows may attend to.
namespace lscene::attention {

using numkit::Mask;
using numkit::Tensor;
using numkit::Var;

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rows [begin, end) of one question. `selected` lists the sparse regions
// whose dense tokens the segment's rows may attend to.
struct TextSegment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> selected;
};

// Vision rows [0, vision) attend causally among themselves. A text row sees
// every vision row and the causal prefix of its own segment. Several
// segments packed after one vision block behave as independent sequences.
struct AttentionLayout {
  std::size_t total = 0;
  std::size_t vision = 0;
  std::vector<TextSegment> segments;

  static AttentionLayout single(std::size_t vision, std::size_t text) {
    return {vision + text, vision, {TextSegment{vision, vision + text, {}}}};
  }

  void validate() const {
    if (total == 0) throw LayoutError("AttentionLayout: empty sequence");
    if (vision > total) throw LayoutError("AttentionLayout: vision span exceeds sequence");
    std::size_t cursor = vision;
    for (const auto& s : segments) {
      if (s.begin != cursor || s.end <= s.begin) {
        throw LayoutError("AttentionLayout: text segments must tile [vision, total)");
      }
      cursor = s.end;
    }
    if (cursor != total) throw LayoutError("AttentionLayout: text segments must tile [vision, total)");
  }

  std::vector<std::size_t> text_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t r = vision; r < total; ++r) rows.push_back(r);
    return rows;
  }

  const TextSegment* segment_of(std::size_t row) const {
    for (const auto& s : segments) {
      if (row >= s.begin && row < s.end) return &s;
    }
    return nullptr;
  }
};

// Projections are d_model x (heads * d_k) except wo, which maps back.
// wk_dense / wv_dense are valid only in magnifier layers.
template <typename T>
struct AttentionParams {
  Var<T> wq, wk, wv, wo;
  Var<T> wk_dense, wv_dense;
  std::size_t heads = 1;
  std::size_t d_k = 1;

  bool is_magnifier() const { return wk_dense.valid() && wv_dense.valid(); }
};

// Softmax weights of one layer. weights[h] is T x (T + n_dense); the
// sliced map is T x vision, head-aggregated, with no dense columns.
struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t vision = 0;
  std::size_t n_dense = 0;
  std::vector<Tensor<double>> weights;
  Tensor<double> sliced_map;
};

// 1 = masked. Columns [T, T + owners.size()) are dense keys.
inline Mask attention_mask(const AttentionLayout& layout, std::span<const std::size_t> owners) {
  layout.validate();
  const std::size_t t = layout.total;
  Mask m = Mask::filled(t, t + owners.size(), 1);
  for (std::size_t r = 0; r < layout.vision; ++r) {
    for (std::size_t c = 0; c <= r; ++c) m(r, c) = 0;
  }
  for (const auto& seg : layout.segments) {
    for (std::size_t r = seg.begin; r < seg.end; ++r) {
      for (std::size_t c = 0; c < layout.vision; ++c) m(r, c) = 0;
      for (std::size_t c = seg.begin; c <= r; ++c) m(r, c) = 0;
      for (std::size_t j = 0; j < owners.size(); ++j) {
        if (std::find(seg.selected.begin(), seg.selected.end(), owners[j]) != seg.selected.end()) {
          m(r, t + j) = 0;
        }
      }
    }
  }
  return m;
}

namespace detail {

template <typename T>
void check_params(const AttentionParams<T>& p, std::size_t d_model) {
  const std::size_t w = p.heads * p.d_k;
  auto bad = [&](const Var<T>& v, std::size_t r, std::size_t c, const char* name) {
    if (v.rows() != r || v.cols() != c) {
      throw numkit::ShapeError(std::string("attention: ") + name + " is " +
                               numkit::shape_str(v.shape()) + ", expected " +
                               std::to_string(r) + "x" + std::to_string(c));
    }
  };
  bad(p.wq, d_model, w, "wq");
  bad(p.wk, d_model, w, "wk");
  bad(p.wv, d_model, w, "wv");
  bad(p.wo, w, d_model, "wo");
  if (p.is_magnifier()) {
    bad(p.wk_dense, d_model, w, "wk_dense");
    bad(p.wv_dense, d_model, w, "wv_dense");
  }
}

inline Tensor<double> aggregate_heads(const std::vector<Tensor<double>>& heads, std::size_t cols,
                                      HeadAgg agg) {
  const std::size_t rows = heads.front().rows();
  Tensor<double> out = Tensor<double>::zeros(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double v = agg == HeadAgg::kMax ? heads.front()(r, c) : 0.0;
      for (const auto& h : heads) {
        v = agg == HeadAgg::kMax ? std::max(v, h(r, c)) : v + h(r, c);
      }
      out(r, c) = agg == HeadAgg::kMax ? v : v / static_cast<double>(heads.size());
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
struct AttentionOutput {
  Var<T> out;  // T x d_model
  AttentionRecord record;
};

// Shared core. `dense` / `owners` may be empty; when they are, no dense
// work is done and the result is the standard layer's.
template <typename T>
AttentionOutput<T> attend(const Var<T>& h, const AttentionLayout& layout,
                          const AttentionParams<T>& p, const Var<T>* dense,
                          std::span<const std::size_t> owners, HeadAgg agg) {
  layout.validate();
  if (h.rows() != layout.total) {
    throw LayoutError("attention: hidden has " + std::to_string(h.rows()) +
                      " rows, layout expects " + std::to_string(layout.total));
  }
  detail::check_params(p, h.cols());
  const std::size_t t = layout.total;
  const T inv = T(1) / std::sqrt(static_cast<T>(p.d_k));
  const T sentinel = numkit::masked_sentinel<T>();

  const bool use_dense = dense != nullptr && !owners.empty();
  if (use_dense) {
    if (!p.is_magnifier()) throw ConfigError("attention: dense tokens need a magnifier layer");
    if (dense->rows() != owners.size()) {
      throw numkit::ShapeError("attention: dense batch rows and owner map disagree");
    }
  }
  Mask mask = attention_mask(layout, use_dense ? owners : std::span<const std::size_t>{});
  const std::size_t n_dense = use_dense ? owners.size() : 0;

  // Text rows allowed to see at least one dense column.
  std::vector<std::size_t> dense_rows;
  if (use_dense) {
    for (std::size_t r = layout.vision; r < t; ++r) {
      for (std::size_t j = 0; j < n_dense; ++j) {
        if (!mask(r, t + j)) {
          dense_rows.push_back(r);
          break;
        }
      }
    }
  }
  const bool dense_path = !dense_rows.empty();
  if (use_dense && !dense_path) mask = attention_mask(layout, {});

  auto q = numkit::matmul(h, p.wq);
  auto k = numkit::matmul(h, p.wk);
  auto v = numkit::matmul(h, p.wv);
  Var<T> kd, vd;
  if (dense_path) {
    kd = numkit::matmul(*dense, p.wk_dense);
    vd = numkit::matmul(*dense, p.wv_dense);
  }

  AttentionRecord rec;
  rec.vision = layout.vision;
  rec.n_dense = dense_path ? n_dense : 0;
  std::vector<Var<T>> head_out;
  for (std::size_t hd = 0; hd < p.heads; ++hd) {
    const std::size_t b = hd * p.d_k, e = b + p.d_k;
    auto qh = numkit::slice_cols(q, b, e);
    auto kh = numkit::slice_cols(k, b, e);
    auto vh = numkit::slice_cols(v, b, e);
    auto scores = numkit::scale(numkit::matmul_nt(qh, kh), inv);
    if (dense_path) {
      // Dense scores are computed for text rows only; other rows hold the
      // sentinel and never reach a GEMM.
      auto qt = numkit::gather_rows(qh, dense_rows);
      auto sd = numkit::scale(numkit::matmul_nt(qt, numkit::slice_cols(kd, b, e)), inv);
      scores = numkit::concat<T>({scores, numkit::scatter_rows(sd, dense_rows, t, sentinel)}, 1);
    }
    auto probs = numkit::masked_softmax_rows(scores, mask);
    rec.weights.push_back(probs.value().template cast<double>());
    Var<T> oh;
    if (dense_path) {
      auto ph = numkit::slice_cols(probs, 0, t);
      auto pd = numkit::gather_rows(numkit::slice_cols(probs, t, t + n_dense), dense_rows);
      auto od = numkit::matmul(pd, numkit::slice_cols(vd, b, e));
      oh = numkit::add(numkit::matmul(ph, vh), numkit::scatter_rows(od, dense_rows, t, T{0}));
    } else {
      oh = numkit::matmul(probs, vh);
    }
    head_out.push_back(oh);
  }
  auto joined = p.heads == 1 ? head_out.front() : numkit::concat(head_out, 1);
  rec.sliced_map = detail::aggregate_heads(rec.weights, layout.vision, agg);
  return {numkit::matmul(joined, p.wo), std::move(rec)};
}

template <typename T>
AttentionOutput<T> standard_self_attention(const Var<T>& h, const AttentionLayout& layout,
                                           const AttentionParams<T>& p,
                                           HeadAgg agg = HeadAgg::kMean) {
  return attend(h, layout, p, static_cast<const Var<T>*>(nullptr), {}, agg);
}

// `dense` rows are keys/values owned by sparse regions `owners`; the layout
// segments' `selected` lists decide which text rows see which of them.
template <typename T>
AttentionOutput<T> adaptive_self_attention(const Var<T>& h, const Var<T>& dense,
                                           std::span<const std::size_t> owners,
                                           const AttentionLayout& layout,
                                           const AttentionParams<T>& p,
                                           HeadAgg agg = HeadAgg::kMean) {
  return attend(h, layout, p, dense.valid() ? &dense : nullptr, owners, agg);
}

}  // namespace lscene::attention
