#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "lscene/pointcloud/scene_field.hpp"

namespace lscene::pointcloud {

// Farthest point sampling restricted to `candidates` (indices into field).
// The first pick is candidates[seed_slot]; every later pick maximizes the
// distance to the chosen set, ties going to the earliest candidate. Returns
// field indices.
inline std::vector<std::size_t> farthest_point_sample(const SceneField& field,
                                                      std::span<const std::size_t> candidates,
                                                      std::size_t n, std::size_t seed_slot) {
  const std::size_t m = candidates.size();
  if (n == 0 || n > m) {
    throw CardinalityError("farthest_point_sample: requested " + std::to_string(n) +
                           " samples from " + std::to_string(m) + " points");
  }
  if (seed_slot >= m) throw CardinalityError("farthest_point_sample: seed out of range");
  std::vector<float> min_dist(m, std::numeric_limits<float>::infinity());
  std::vector<bool> taken(m, false);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  std::size_t current = seed_slot;
  for (std::size_t step = 0; step < n; ++step) {
    picked.push_back(candidates[current]);
    taken[current] = true;
    if (step + 1 == n) break;
    const Vec3 c = field.position(candidates[current]);
    std::size_t best = m;
    float best_dist = -1.0f;
    for (std::size_t j = 0; j < m; ++j) {
      if (taken[j]) continue;
      min_dist[j] = std::min(min_dist[j], squared_distance(c, field.position(candidates[j])));
      if (min_dist[j] > best_dist) {
        best_dist = min_dist[j];
        best = j;
      }
    }
    current = best;
  }
  return picked;
}

inline std::vector<std::size_t> farthest_point_sample(const SceneField& field, std::size_t n,
                                                      std::size_t seed_index) {
  std::vector<std::size_t> all(field.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (seed_index >= all.size()) throw CardinalityError("farthest_point_sample: seed out of range");
  return farthest_point_sample(field, all, n, seed_index);
}

// n distinct indices drawn uniformly from [0, m), returned sorted.
inline std::vector<std::size_t> random_sample(std::size_t m, std::size_t n, std::mt19937_64& rng) {
  if (n > m) {
    throw CardinalityError("random_sample: requested " + std::to_string(n) + " of " +
                           std::to_string(m));
  }
  std::vector<std::size_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Points within q.radius of q.center, nearest first (ties by index), at most
// q.max_points of them. An empty ball yields the single nearest point.
inline std::vector<std::size_t> ball_query(const SceneField& field,
                                           std::span<const std::size_t> candidates,
                                           const RegionQuery& q) {
  q.validate();
  if (candidates.empty()) throw CardinalityError("ball_query: no candidate points");
  const float r2 = q.radius * q.radius;
  std::vector<std::pair<float, std::size_t>> inside;
  std::pair<float, std::size_t> nearest{std::numeric_limits<float>::infinity(), 0};
  for (std::size_t idx : candidates) {
    const float d = squared_distance(field.position(idx), q.center);
    if (d <= r2) inside.emplace_back(d, idx);
    if (d < nearest.first || (d == nearest.first && idx < nearest.second)) nearest = {d, idx};
  }
  if (inside.empty()) return {nearest.second};
  const std::size_t keep = std::min(inside.size(), q.max_points);
  std::partial_sort(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(keep),
                    inside.end());
  std::vector<std::size_t> out(keep);
  for (std::size_t i = 0; i < keep; ++i) out[i] = inside[i].second;
  return out;
}

inline std::vector<std::size_t> ball_query(const SceneField& field, const RegionQuery& q) {
  std::vector<std::size_t> all(field.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return ball_query(field, all, q);
}

}  // namespace lscene::pointcloud
