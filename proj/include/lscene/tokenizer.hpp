#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lscene/config.hpp"
#include "lscene/numkit.hpp"
#include "lscene/pointcloud.hpp"

// Two-level scene tokens. Sparse tokens summarize wide neighborhoods of a
// downsampled field; dense tokens summarize narrow neighborhoods of the
// full-resolution field around selected sparse centers.
namespace lscene::tokenizer {

using pointcloud::Grouping;
using pointcloud::SceneField;
using pointcloud::Vec3;

template <typename T>
struct TokenizerParams {
  pointcloud::SAParams<T> sparse;
  pointcloud::SAParams<T> dense;
};

template <typename T>
struct SparseTokenSet {
  numkit::Var<T> tokens;  // S x d_model
  std::vector<Vec3> centers;
  float region_radius = 0.0f;
  std::string source_scene;

  std::size_t size() const { return centers.size(); }
};

// Keys/values only. `tokens` is invalid when the batch is empty.
template <typename T>
struct DenseTokenBatch {
  numkit::Var<T> tokens;            // (R * k) x d_model
  std::vector<std::size_t> owner;   // sparse index of each row
  std::vector<Vec3> centers;        // sub-center of each row
  std::size_t k = 0;

  std::size_t size() const { return owner.size(); }
  bool empty() const { return owner.empty(); }
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Parameter-free geometry of one scene: the downsampled field, the sparse
// centers with their groups, and a lazily filled cache of dense regions.
// Region entries never change once written, so references stay valid for
// the lifetime of the ScenePrep.
class ScenePrep {
 public:
  ScenePrep(std::shared_ptr<const SceneField> field, const ModelConfig& cfg)
      : field_(std::move(field)),
        dense_radius_(cfg.effective_dense_radius()),
        dense_group_radius_(cfg.dense_group_radius),
        dense_group_size_(cfg.dense_group_size),
        region_max_points_(cfg.region_max_points),
        k_(cfg.dense_token_num) {
    const SceneField& f = *field_;
    f.validate();
    const std::size_t s = cfg.vision_token_num;
    if (f.size() < s) {
      throw pointcloud::CardinalityError(
          "build_sparse_tokens: scene '" + f.scene_id + "' has " + std::to_string(f.size()) +
          " points, fewer than " + std::to_string(s) + " vision tokens");
    }
    std::mt19937_64 rng(cfg.seed ^ fnv1a(f.scene_id));
    if (f.size() > cfg.downsample_points) {
      down_ = f.subset(pointcloud::random_sample(f.size(), cfg.downsample_points, rng));
    } else {
      down_ = f;
    }
    std::vector<std::size_t> picks;
    if (cfg.sampler == Sampler::kFps) {
      picks = pointcloud::farthest_point_sample(down_, s, 0);
    } else {
      picks = pointcloud::random_sample(down_.size(), s, rng);
    }
    centers_.reserve(s);
    for (std::size_t i : picks) centers_.push_back(down_.position(i));
    sparse_groups_ = pointcloud::group_points(down_, centers_, cfg.region_radius,
                                              cfg.sparse_group_size);
  }

  ScenePrep(const ScenePrep&) = delete;
  ScenePrep& operator=(const ScenePrep&) = delete;

  const SceneField& field() const { return *field_; }
  const SceneField& downsampled() const { return down_; }
  const std::vector<Vec3>& centers() const { return centers_; }
  const Grouping& sparse_groups() const { return sparse_groups_; }
  float dense_radius() const { return dense_radius_; }
  std::size_t dense_token_num() const { return k_; }

  // k sub-center groups of the full field around sparse center `index`.
  const Grouping& region(std::size_t index) {
    if (index >= centers_.size()) {
      throw pointcloud::CardinalityError("region: sparse index out of range");
    }
    std::lock_guard lock(mu_);
    auto it = regions_.find(index);
    if (it == regions_.end()) it = regions_.emplace(index, build_region(index)).first;
    return it->second;
  }

 private:
  Grouping build_region(std::size_t index) const {
    const SceneField& f = *field_;
    const Vec3 c = centers_[index];
    // The center is itself a field point, so the ball is never empty.
    const auto ball =
        pointcloud::ball_query(f, pointcloud::RegionQuery{c, dense_radius_, region_max_points_});
    const std::size_t n = std::min(k_, ball.size());
    auto subs = pointcloud::farthest_point_sample(f, ball, n, 0);
    std::vector<Vec3> sub_centers;
    sub_centers.reserve(k_);
    for (std::size_t i = 0; i < k_; ++i) sub_centers.push_back(f.position(subs[i % n]));
    return pointcloud::group_points(f, ball, sub_centers, dense_group_radius_, dense_group_size_);
  }

  std::shared_ptr<const SceneField> field_;
  SceneField down_;
  std::vector<Vec3> centers_;
  Grouping sparse_groups_;
  float dense_radius_;
  float dense_group_radius_;
  std::size_t dense_group_size_;
  std::size_t region_max_points_;
  std::size_t k_;
  std::mutex mu_;
  std::map<std::size_t, Grouping> regions_;
};

template <typename T>
SparseTokenSet<T> build_sparse_tokens(numkit::Tape<T>& tape, const ScenePrep& prep,
                                      const pointcloud::SAParams<T>& params) {
  SparseTokenSet<T> out;
  out.tokens = pointcloud::sa_encode(tape, prep.downsampled(), prep.sparse_groups(), params);
  out.centers = prep.centers();
  out.region_radius = prep.sparse_groups().radius;
  out.source_scene = prep.field().scene_id;
  return out;
}

// Dense tokens for the selected sparse indices, in selection order. An empty
// selection or k = 0 yields an empty batch.
template <typename T>
DenseTokenBatch<T> build_dense_tokens(numkit::Tape<T>& tape, ScenePrep& prep,
                                      std::span<const std::size_t> selected,
                                      const pointcloud::SAParams<T>& params) {
  DenseTokenBatch<T> out;
  out.k = prep.dense_token_num();
  if (selected.empty() || out.k == 0) return out;
  Grouping all;
  for (std::size_t idx : selected) {
    const Grouping& g = prep.region(idx);
    if (all.centers.empty()) {
      all.group_size = g.group_size;
      all.radius = g.radius;
    }
    all.centers.insert(all.centers.end(), g.centers.begin(), g.centers.end());
    all.members.insert(all.members.end(), g.members.begin(), g.members.end());
    out.owner.insert(out.owner.end(), out.k, idx);
  }
  out.centers = all.centers;
  out.tokens = pointcloud::sa_encode(tape, prep.field(), all, params);
  return out;
}

// Fixed sinusoidal code of 3D positions: d / 6 geometric wavelengths per axis
// between min_wl and max_wl, (sin, cos) pairs, unused trailing columns zero.
template <typename T>
numkit::Tensor<T> positional_encoding_3d(std::span<const Vec3> points, std::size_t d,
                                         float min_wl, float max_wl) {
  numkit::Tensor<T> pe = numkit::Tensor<T>::zeros(points.size(), d);
  const std::size_t f = d / 6;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t j = 0; j < f; ++j) {
        const double frac = f > 1 ? static_cast<double>(j) / static_cast<double>(f - 1) : 0.0;
        const double wl = min_wl * std::pow(static_cast<double>(max_wl) / min_wl, frac);
        const double phase = 2.0 * std::numbers::pi * points[i][a] / wl;
        pe(i, a * 2 * f + 2 * j) = static_cast<T>(std::sin(phase));
        pe(i, a * 2 * f + 2 * j + 1) = static_cast<T>(std::cos(phase));
      }
    }
  }
  return pe;
}

// Standard sinusoidal code of integer positions.
template <typename T>
numkit::Tensor<T> positional_encoding_1d(std::span<const std::size_t> positions, std::size_t d) {
  numkit::Tensor<T> pe = numkit::Tensor<T>::zeros(positions.size(), d);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = 0; j + 1 < d; j += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(d));
      const double phase = static_cast<double>(positions[i]) * rate;
      pe(i, j) = static_cast<T>(std::sin(phase));
      pe(i, j + 1) = static_cast<T>(std::cos(phase));
    }
  }
  return pe;
}

}  // namespace lscene::tokenizer
