#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lscene/errors.hpp"

namespace lscene {

enum class HeadAgg { kMean, kMax };
enum class Sampler { kFps, kRandom };
enum class SelectStrategy { kAttentionMap, kRandom };

NLOHMANN_JSON_SERIALIZE_ENUM(HeadAgg, {{HeadAgg::kMean, "mean"}, {HeadAgg::kMax, "max"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Sampler, {{Sampler::kFps, "fps"}, {Sampler::kRandom, "random"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SelectStrategy, {{SelectStrategy::kAttentionMap, "attention-map"},
                                              {SelectStrategy::kRandom, "random"}})

// Architecture, tokenizer and selector hyperparameters.
struct ModelConfig {
  // transformer
  std::size_t n_layers = 4;
  std::size_t n_standard = 2;
  std::size_t n_magnifier = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_k = 16;
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 0;   // filled from the vocabulary
  std::size_t feature_dim = 0;  // per-point feature width of the scenes

  // tokenizer
  std::size_t vision_token_num = 128;
  std::size_t dense_token_num = 4;  // 0 disables dense retrieval
  std::size_t downsample_points = 4096;
  float region_radius = 0.6f;
  float dense_radius = 0.0f;  // 0 means region_radius / 2
  std::size_t sparse_group_size = 32;
  std::size_t dense_group_size = 16;
  float dense_group_radius = 0.15f;
  std::size_t region_max_points = 256;
  std::size_t sa_hidden = 64;
  Sampler sampler = Sampler::kFps;
  float pos_min_wavelength = 0.25f;
  float pos_max_wavelength = 32.0f;

  // selector
  int threshold = 96;
  HeadAgg head_agg = HeadAgg::kMean;
  SelectStrategy select_strategy = SelectStrategy::kAttentionMap;
  double max_select_frac = 0.0;  // 0 disables the cap

  std::uint64_t seed = 0;

  float effective_dense_radius() const {
    return dense_radius > 0.0f ? dense_radius : region_radius / 2.0f;
  }
  std::size_t attn_width() const { return heads * d_k; }
  bool magnifier_active() const { return n_magnifier > 0 && dense_token_num > 0; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("ModelConfig: " + m); };
    if (n_standard + n_magnifier != n_layers) fail("n_standard + n_magnifier must equal n_layers");
    if (n_magnifier > 0 && n_standard < 1) fail("magnifier layers need at least one standard layer");
    if (heads == 0 || d_k == 0 || d_model == 0) fail("heads, d_k and d_model must be positive");
    if (threshold < 0 || threshold > 255) fail("threshold must lie in [0, 255]");
    if (vision_token_num == 0) fail("vision_token_num must be at least 1");
    if (downsample_points < vision_token_num) fail("downsample_points below vision_token_num");
    if (!(region_radius > 0.0f) || !(dense_group_radius > 0.0f)) fail("radii must be positive");
    if (sparse_group_size == 0 || dense_group_size == 0 || region_max_points == 0) {
      fail("group sizes must be positive");
    }
    if (max_select_frac < 0.0 || max_select_frac > 1.0) fail("max_select_frac must lie in [0, 1]");
    if (vocab_size == 0) fail("vocab_size is unset");
    if (feature_dim == 0) fail("feature_dim is unset");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ModelConfig, n_layers, n_standard, n_magnifier, heads, d_model, d_k, ffn_mult, vocab_size,
    feature_dim, vision_token_num, dense_token_num, downsample_points, region_radius, dense_radius,
    sparse_group_size, dense_group_size, dense_group_radius, region_max_points, sa_hidden, sampler,
    pos_min_wavelength, pos_max_wavelength, threshold, head_agg, select_strategy, max_select_frac,
    seed)

}  // namespace lscene
