#pragma once

#include <span>
#include <vector>

#include "lscene/numkit.hpp"
#include "lscene/pointcloud/sampling.hpp"

namespace lscene::pointcloud {

// Neighborhoods around a list of centers; members is row-major
// centers.size() x group_size, padded by repeating each group's nearest point.
struct Grouping {
  std::vector<Vec3> centers;
  std::vector<std::size_t> members;
  std::size_t group_size = 0;
  float radius = 0.0f;

  std::size_t groups() const { return centers.size(); }
  std::span<const std::size_t> group(std::size_t g) const {
    return std::span<const std::size_t>(members).subspan(g * group_size, group_size);
  }
};

inline Grouping group_points(const SceneField& field, std::span<const std::size_t> candidates,
                             std::span<const Vec3> centers, float radius,
                             std::size_t group_size) {
  if (group_size == 0) throw ConfigError("group_points: group_size must be at least 1");
  Grouping g;
  g.centers.assign(centers.begin(), centers.end());
  g.group_size = group_size;
  g.radius = radius;
  g.members.reserve(centers.size() * group_size);
  for (const Vec3& c : centers) {
    auto hits = ball_query(field, candidates, RegionQuery{c, radius, group_size});
    for (std::size_t i = 0; i < group_size; ++i) {
      g.members.push_back(i < hits.size() ? hits[i] : hits.front());
    }
  }
  return g;
}

inline Grouping group_points(const SceneField& field, std::span<const Vec3> centers,
                             float radius, std::size_t group_size) {
  std::vector<std::size_t> all(field.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return group_points(field, all, centers, radius, group_size);
}

// Learnable weights of one set-abstraction block:
//   token = max_over_group( relu([ (p - c) / radius, f ] W1 + b1) ) W2 + b2
template <typename T>
struct SAParams {
  numkit::Var<T> w1;  // (3 + d_f) x hidden
  numkit::Var<T> b1;  // 1 x hidden
  numkit::Var<T> w2;  // hidden x d_out
  numkit::Var<T> b2;  // 1 x d_out

  std::size_t input_dim() const { return w1.rows(); }
  std::size_t output_dim() const { return w2.cols(); }
};

// Per-point inputs of a grouping: (groups * group_size) x (3 + d_f).
template <typename T>
numkit::Tensor<T> grouped_inputs(const SceneField& field, const Grouping& g) {
  const std::size_t width = 3 + field.feature_dim;
  numkit::Tensor<T> x = numkit::Tensor<T>::zeros(g.members.size(), width);
  for (std::size_t gi = 0; gi < g.groups(); ++gi) {
    const Vec3& c = g.centers[gi];
    for (std::size_t k = 0; k < g.group_size; ++k) {
      const std::size_t row = gi * g.group_size + k;
      const std::size_t p = g.members[row];
      const Vec3 pos = field.position(p);
      for (int a = 0; a < 3; ++a) x(row, a) = static_cast<T>((pos[a] - c[a]) / g.radius);
      const auto f = field.feature(p);
      for (std::size_t j = 0; j < f.size(); ++j) x(row, 3 + j) = static_cast<T>(f[j]);
    }
  }
  return x;
}

template <typename T>
numkit::Var<T> sa_encode(numkit::Tape<T>& tape, const SceneField& field, const Grouping& g,
                         const SAParams<T>& params) {
  if (params.output_dim() == 0) throw ConfigError("sa_encode: d_out must be at least 1");
  if (params.input_dim() != 3 + field.feature_dim) {
    throw ConfigError("sa_encode: parameters expect input width " +
                      std::to_string(params.input_dim()) + " but field has 3 + " +
                      std::to_string(field.feature_dim));
  }
  auto x = tape.constant(grouped_inputs<T>(field, g));
  auto h = numkit::relu(numkit::add_bias(numkit::matmul(x, params.w1), params.b1));
  auto pooled = numkit::max_pool_groups(h, g.group_size);
  return numkit::add_bias(numkit::matmul(pooled, params.w2), params.b2);
}

template <typename T>
struct SAOutput {
  numkit::Var<T> tokens;      // |centers| x d_out
  std::vector<Vec3> centers;  // |centers| x 3
};

// Set abstraction around existing points of the field.
template <typename T>
SAOutput<T> sa_aggregate(numkit::Tape<T>& tape, const SceneField& field,
                         std::span<const std::size_t> center_indices, float radius,
                         std::size_t group_size, const SAParams<T>& params) {
  if (params.output_dim() == 0) throw ConfigError("sa_aggregate: d_out must be at least 1");
  std::vector<Vec3> centers;
  centers.reserve(center_indices.size());
  for (std::size_t i : center_indices) {
    if (i >= field.size()) throw CardinalityError("sa_aggregate: center index out of range");
    centers.push_back(field.position(i));
  }
  Grouping g = group_points(field, centers, radius, group_size);
  return {sa_encode(tape, field, g, params), std::move(g.centers)};
}

}  // namespace lscene::pointcloud
