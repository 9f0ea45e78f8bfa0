#pragma once

// Loop-only reference implementations used as test oracles. Nothing here
// touches the tape, the GEMM kernel or the library's mask builder.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lscene/numkit/tensor.hpp"

namespace naive {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat from(const lscene::numkit::Tensor<double>& t) {
  Mat m = zeros(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  }
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat out = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  }
  return out;
}

struct Segment {
  std::size_t begin, end;
  std::vector<std::size_t> selected;
};

struct Layout {
  std::size_t total, vision;
  std::vector<Segment> segments;
};

inline const Segment* segment_of(const Layout& l, std::size_t r) {
  for (const auto& s : l.segments) {
    if (r >= s.begin && r < s.end) return &s;
  }
  return nullptr;
}

inline bool allowed_hidden(const Layout& l, std::size_t r, std::size_t c) {
  if (r < l.vision) return c <= r;
  if (c < l.vision) return true;
  const Segment* s = segment_of(l, r);
  return c >= s->begin && c <= r;
}

inline bool allowed_dense(const Layout& l, std::size_t r, std::size_t owner) {
  if (r < l.vision) return false;
  const Segment* s = segment_of(l, r);
  return std::find(s->selected.begin(), s->selected.end(), owner) != s->selected.end();
}

struct AttentionWeights {
  Mat wq, wk, wv, wo;
  Mat wkd, wvd;  // empty unless dense tokens are used
  std::size_t heads, d_k;
};

struct AttentionResult {
  Mat out;
  std::vector<Mat> weights;  // per head, T x (T + n_dense)
};

// Materializes the full T x (T + n_dense) score matrix per head.
inline AttentionResult attention(const Mat& h, const Mat& dense,
                                 const std::vector<std::size_t>& owners, const Layout& l,
                                 const AttentionWeights& w) {
  const std::size_t t = h.size();
  const std::size_t nd = owners.size();
  const Mat q = mul(h, w.wq), k = mul(h, w.wk), v = mul(h, w.wv);
  Mat kd, vd;
  if (nd > 0) {
    kd = mul(dense, w.wkd);
    vd = mul(dense, w.wvd);
  }
  AttentionResult res;
  Mat concat = zeros(t, w.heads * w.d_k);
  for (std::size_t hd = 0; hd < w.heads; ++hd) {
    const std::size_t off = hd * w.d_k;
    Mat p = zeros(t, t + nd);
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> s(t + nd, 0.0);
      std::vector<bool> ok(t + nd, false);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < t + nd; ++c) {
        ok[c] = c < t ? allowed_hidden(l, r, c) : allowed_dense(l, r, owners[c - t]);
        if (!ok[c]) continue;
        const Mat& kk = c < t ? k : kd;
        const std::size_t kr = c < t ? c : c - t;
        double dot = 0;
        for (std::size_t j = 0; j < w.d_k; ++j) dot += q[r][off + j] * kk[kr][off + j];
        s[c] = dot / std::sqrt(static_cast<double>(w.d_k));
        mx = std::max(mx, s[c]);
      }
      double z = 0;
      for (std::size_t c = 0; c < t + nd; ++c) {
        if (ok[c]) z += std::exp(s[c] - mx);
      }
      for (std::size_t c = 0; c < t + nd; ++c) p[r][c] = ok[c] ? std::exp(s[c] - mx) / z : 0.0;
      for (std::size_t j = 0; j < w.d_k; ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < t; ++c) acc += p[r][c] * v[c][off + j];
        for (std::size_t c = 0; c < nd; ++c) acc += p[r][t + c] * vd[c][off + j];
        concat[r][off + j] = acc;
      }
    }
    res.weights.push_back(std::move(p));
  }
  res.out = mul(concat, w.wo);
  return res;
}

}  // namespace naive
