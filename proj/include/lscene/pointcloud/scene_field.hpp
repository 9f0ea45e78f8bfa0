#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lscene/errors.hpp"

namespace lscene::pointcloud {

using Vec3 = std::array<float, 3>;

class CardinalityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using lscene::ConfigError;

inline float squared_distance(const Vec3& a, const Vec3& b) {
  const float dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Dense per-point positions (meters) and features for one scene.
struct SceneField {
  std::string scene_id;
  std::size_t feature_dim = 0;
  std::vector<float> positions;  // M x 3
  std::vector<float> features;   // M x feature_dim

  std::size_t size() const { return positions.size() / 3; }

  Vec3 position(std::size_t i) const {
    return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
  }

  std::span<const float> feature(std::size_t i) const {
    return std::span<const float>(features).subspan(i * feature_dim, feature_dim);
  }

  void push_back(const Vec3& p, std::span<const float> f) {
    if (f.size() != feature_dim) throw std::invalid_argument("SceneField: feature width mismatch");
    positions.insert(positions.end(), p.begin(), p.end());
    features.insert(features.end(), f.begin(), f.end());
  }

  void validate() const {
    if (positions.size() % 3 != 0) throw std::invalid_argument("SceneField: ragged positions");
    if (size() == 0) throw CardinalityError("SceneField '" + scene_id + "' has no points");
    if (features.size() != size() * feature_dim) {
      throw std::invalid_argument("SceneField '" + scene_id +
                                  "': feature rows do not match point count");
    }
    for (float v : positions) {
      if (!std::isfinite(v)) throw std::invalid_argument("SceneField: non-finite coordinate");
    }
  }

  SceneField subset(std::span<const std::size_t> indices) const {
    SceneField out;
    out.scene_id = scene_id;
    out.feature_dim = feature_dim;
    out.positions.reserve(indices.size() * 3);
    out.features.reserve(indices.size() * feature_dim);
    for (std::size_t i : indices) out.push_back(position(i), feature(i));
    return out;
  }

  // Axis-aligned bounds as {min, max}.
  std::array<Vec3, 2> bounds() const {
    Vec3 lo = position(0), hi = lo;
    for (std::size_t i = 1; i < size(); ++i) {
      const Vec3 p = position(i);
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
    return {lo, hi};
  }
};

struct RegionQuery {
  Vec3 center{};
  float radius = 1.0f;
  std::size_t max_points = 1;

  void validate() const {
    if (!(radius > 0.0f)) throw ConfigError("RegionQuery: radius must be positive");
    if (max_points == 0) throw ConfigError("RegionQuery: max_points must be at least 1");
  }
};

}  // namespace lscene::pointcloud
