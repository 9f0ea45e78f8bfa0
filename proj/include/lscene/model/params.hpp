#pragma once

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "lscene/attention.hpp"
#include "lscene/config.hpp"
#include "lscene/numkit.hpp"
#include "lscene/pointcloud/set_abstraction.hpp"

namespace lscene::model {

using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

// Named parameter tensors. Names:
//   text_embed                      vocab x d_model
//   sparse_sa.{w1,b1,w2,b2}         point map of the sparse tokens
//   dense_sa.{w1,b1,w2,b2}          point map of the dense tokens
//   layers.<i>.ln1.{g,b}, layers.<i>.ln2.{g,b}
//   layers.<i>.attn.{wq,wk,wv,wo}   plus wk_dense, wv_dense in magnifier layers
//   layers.<i>.ffn.{w1,b1,w2,b2}
//   final_ln.{g,b}, lm_head         d_model x vocab
template <typename T>
struct ModelParams {
  ModelConfig cfg;
  std::map<std::string, Tensor<T>> tensors;

  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("ModelParams: no tensor '" + name + "'");
    return it->second;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out{cfg, {}};
    for (const auto& [k, t] : tensors) out.tensors.emplace(k, t.template cast<U>());
    return out;
  }
};

inline std::string layer_prefix(std::size_t i) { return "layers." + std::to_string(i) + "."; }

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> p{cfg, {}};
  auto normal = [&](std::size_t r, std::size_t c, double sd) {
    std::normal_distribution<double> d(0.0, sd);
    Tensor<T> t = Tensor<T>::zeros(r, c);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
  };
  auto put = [&](const std::string& k, Tensor<T> t) { p.tensors.emplace(k, std::move(t)); };
  const std::size_t d = cfg.d_model, w = cfg.attn_width(), f = cfg.ffn_mult * d;
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));

  put("text_embed", normal(cfg.vocab_size, d, 1.0));
  for (const char* sa : {"sparse_sa.", "dense_sa."}) {
    const std::size_t in = 3 + cfg.feature_dim;
    put(std::string(sa) + "w1", normal(in, cfg.sa_hidden, std::sqrt(2.0 / static_cast<double>(in))));
    put(std::string(sa) + "b1", Tensor<T>::zeros(1, cfg.sa_hidden));
    put(std::string(sa) + "w2",
        normal(cfg.sa_hidden, d, 1.0 / std::sqrt(static_cast<double>(cfg.sa_hidden))));
    put(std::string(sa) + "b2", Tensor<T>::zeros(1, d));
  }
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string L = layer_prefix(i);
    put(L + "ln1.g", Tensor<T>::filled(1, d, T(1)));
    put(L + "ln1.b", Tensor<T>::zeros(1, d));
    put(L + "attn.wq", normal(d, w, inv_d));
    put(L + "attn.wk", normal(d, w, inv_d));
    put(L + "attn.wv", normal(d, w, inv_d));
    put(L + "attn.wo", normal(w, d, resid / std::sqrt(static_cast<double>(w))));
    if (i >= cfg.n_standard) {
      put(L + "attn.wk_dense", normal(d, w, inv_d));
      put(L + "attn.wv_dense", normal(d, w, inv_d));
    }
    put(L + "ln2.g", Tensor<T>::filled(1, d, T(1)));
    put(L + "ln2.b", Tensor<T>::zeros(1, d));
    put(L + "ffn.w1", normal(d, f, inv_d));
    put(L + "ffn.b1", Tensor<T>::zeros(1, f));
    put(L + "ffn.w2", normal(f, d, resid / std::sqrt(static_cast<double>(f))));
    put(L + "ffn.b2", Tensor<T>::zeros(1, d));
  }
  put("final_ln.g", Tensor<T>::filled(1, d, T(1)));
  put("final_ln.b", Tensor<T>::zeros(1, d));
  put("lm_head", normal(d, cfg.vocab_size, inv_d));
  return p;
}

// Parameters placed on a tape, as trainable leaves or as constants.
template <typename T>
struct BoundParams {
  std::map<std::string, Var<T>> vars;

  const Var<T>& operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::out_of_range("BoundParams: no tensor '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return vars.count(name) != 0; }

  pointcloud::SAParams<T> sa(const std::string& prefix) const {
    return {(*this)[prefix + "w1"], (*this)[prefix + "b1"], (*this)[prefix + "w2"],
            (*this)[prefix + "b2"]};
  }

  attention::AttentionParams<T> attn(std::size_t layer, const ModelConfig& cfg) const {
    const std::string L = layer_prefix(layer) + "attn.";
    attention::AttentionParams<T> a{(*this)[L + "wq"], (*this)[L + "wk"], (*this)[L + "wv"],
                                    (*this)[L + "wo"], {}, {}, cfg.heads, cfg.d_k};
    if (contains(L + "wk_dense")) {
      a.wk_dense = (*this)[L + "wk_dense"];
      a.wv_dense = (*this)[L + "wv_dense"];
    }
    return a;
  }
};

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ModelParams<T>& p, bool trainable) {
  BoundParams<T> b;
  for (const auto& [k, t] : p.tensors) {
    b.vars.emplace(k, trainable ? tape.leaf(t) : tape.constant(t));
  }
  return b;
}

}  // namespace lscene::model
