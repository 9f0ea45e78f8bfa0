#pragma once

// Loop-only end-to-end reference of the model forward for one text sequence.
// Geometry (groupings, centers) is read from the ScenePrep; every numeric
// step, the selection rule and the positional codes are recomputed here.

#include <cmath>
#include <numbers>
#include <vector>

#include "lscene/model/params.hpp"
#include "lscene/tokenizer.hpp"
#include "support/naive.hpp"

namespace naive {

inline Mat param(const lscene::model::ModelParams<double>& p, const std::string& name) {
  return from(p.at(name));
}

inline Mat set_abstraction(const lscene::pointcloud::SceneField& field,
                           const lscene::pointcloud::Grouping& g,
                           const lscene::model::ModelParams<double>& p, const std::string& prefix) {
  const Mat w1 = param(p, prefix + "w1"), b1 = param(p, prefix + "b1");
  const Mat w2 = param(p, prefix + "w2"), b2 = param(p, prefix + "b2");
  const std::size_t hidden = w1[0].size(), out = w2[0].size();
  Mat tokens = zeros(g.groups(), out);
  for (std::size_t gi = 0; gi < g.groups(); ++gi) {
    std::vector<double> pooled(hidden, -std::numeric_limits<double>::infinity());
    for (std::size_t m : g.group(gi)) {
      std::vector<double> in;
      const auto pos = field.position(m);
      for (int a = 0; a < 3; ++a) {
        in.push_back(static_cast<double>((pos[a] - g.centers[gi][a]) / g.radius));
      }
      for (float f : field.feature(m)) in.push_back(f);
      for (std::size_t j = 0; j < hidden; ++j) {
        double s = b1[0][j];
        for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * w1[i][j];
        pooled[j] = std::max(pooled[j], std::max(0.0, s));
      }
    }
    for (std::size_t o = 0; o < out; ++o) {
      double s = b2[0][o];
      for (std::size_t j = 0; j < hidden; ++j) s += pooled[j] * w2[j][o];
      tokens[gi][o] = s;
    }
  }
  return tokens;
}

inline void add_position_3d(Mat& x, const std::vector<lscene::pointcloud::Vec3>& pts,
                            double min_wl, double max_wl) {
  const std::size_t d = x.empty() ? 0 : x[0].size();
  const std::size_t f = d / 6;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t j = 0; j < f; ++j) {
        const double wl = f > 1 ? min_wl * std::pow(max_wl / min_wl, double(j) / double(f - 1)) : min_wl;
        const double ph = 2.0 * std::numbers::pi * pts[i][a] / wl;
        x[i][a * 2 * f + 2 * j] += std::sin(ph);
        x[i][a * 2 * f + 2 * j + 1] += std::cos(ph);
      }
    }
  }
}

inline Mat layer_norm(const Mat& x, const Mat& g, const Mat& b) {
  Mat out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0, var = 0;
    for (double v : x[r]) mean += v;
    mean /= n;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t c = 0; c < x[r].size(); ++c) {
      out[r][c] = (x[r][c] - mean) / std::sqrt(var + 1e-5) * g[0][c] + b[0][c];
    }
  }
  return out;
}

inline std::vector<std::size_t> select_regions(const std::vector<double>& row, int threshold) {
  const double lo = *std::min_element(row.begin(), row.end());
  const double hi = *std::max_element(row.begin(), row.end());
  std::vector<int> u8(row.size(), 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      u8[i] = static_cast<int>(std::floor(255.0 * (row[i] - lo) / (hi - lo) + 0.5));
    }
  }
  std::vector<std::size_t> sel;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (u8[i] >= threshold) sel.push_back(i);
  }
  if (sel.empty()) {
    sel.push_back(static_cast<std::size_t>(std::max_element(u8.begin(), u8.end()) - u8.begin()));
  }
  return sel;
}

// Logits T x vocab for [vision | tokens], query row at offset `query`.
// Attention-map selection with mean head aggregation.
inline Mat model_forward(const lscene::model::ModelParams<double>& p,
                         lscene::tokenizer::ScenePrep& prep, const std::vector<std::size_t>& tokens,
                         std::size_t query) {
  const auto& cfg = p.cfg;
  const std::size_t s = cfg.vision_token_num, d = cfg.d_model, t = s + tokens.size();
  Mat vision = set_abstraction(prep.downsampled(), prep.sparse_groups(), p, "sparse_sa.");
  add_position_3d(vision, prep.centers(), cfg.pos_min_wavelength, cfg.pos_max_wavelength);
  Mat x = vision;
  const Mat embed = param(p, "text_embed");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::vector<double> row = embed[tokens[i]];
    const double pos = static_cast<double>(s + i);
    for (std::size_t j = 0; j + 1 < d; j += 2) {
      const double rate = std::pow(10000.0, -double(j) / double(d));
      row[j] += std::sin(pos * rate);
      row[j + 1] += std::cos(pos * rate);
    }
    x.push_back(row);
  }
  Layout layout{t, s, {{s, t, {}}}};
  std::vector<Mat> prev_weights;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string L = lscene::model::layer_prefix(l);
    const Mat h = layer_norm(x, param(p, L + "ln1.g"), param(p, L + "ln1.b"));
    AttentionWeights w{param(p, L + "attn.wq"), param(p, L + "attn.wk"), param(p, L + "attn.wv"),
                       param(p, L + "attn.wo"), {}, {}, cfg.heads, cfg.d_k};
    Mat dense;
    std::vector<std::size_t> owners;
    layout.segments[0].selected.clear();
    if (l >= cfg.n_standard && cfg.dense_token_num > 0) {
      std::vector<double> row(s, 0.0);
      for (const auto& hw : prev_weights) {
        for (std::size_t c = 0; c < s; ++c) row[c] += hw[s + query][c] / double(cfg.heads);
      }
      const auto sel = select_regions(row, cfg.threshold);
      layout.segments[0].selected = sel;
      std::vector<lscene::pointcloud::Vec3> sub;
      for (std::size_t r : sel) {
        const auto& g = prep.region(r);
        const Mat tok = set_abstraction(prep.field(), g, p, "dense_sa.");
        for (std::size_t k = 0; k < g.groups(); ++k) {
          dense.push_back(tok[k]);
          owners.push_back(r);
          sub.push_back(g.centers[k]);
        }
      }
      add_position_3d(dense, sub, cfg.pos_min_wavelength, cfg.pos_max_wavelength);
      w.wkd = param(p, L + "attn.wk_dense");
      w.wvd = param(p, L + "attn.wv_dense");
    }
    const auto a = attention(h, dense, owners, layout, w);
    prev_weights = a.weights;
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < d; ++c) x[r][c] += a.out[r][c];
    }
    const Mat h2 = layer_norm(x, param(p, L + "ln2.g"), param(p, L + "ln2.b"));
    const Mat w1 = param(p, L + "ffn.w1"), b1 = param(p, L + "ffn.b1");
    const Mat w2 = param(p, L + "ffn.w2"), b2 = param(p, L + "ffn.b2");
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> mid(w1[0].size());
      for (std::size_t j = 0; j < mid.size(); ++j) {
        double v = b1[0][j];
        for (std::size_t c = 0; c < d; ++c) v += h2[r][c] * w1[c][j];
        mid[j] = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (v + 0.044715 * v * v * v)));
      }
      for (std::size_t c = 0; c < d; ++c) {
        double v = b2[0][c];
        for (std::size_t j = 0; j < mid.size(); ++j) v += mid[j] * w2[j][c];
        x[r][c] += v;
      }
    }
  }
  return mul(layer_norm(x, param(p, "final_ln.g"), param(p, "final_ln.b")), param(p, "lm_head"));
}

}  // namespace naive
