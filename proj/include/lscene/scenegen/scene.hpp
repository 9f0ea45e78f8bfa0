#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lscene/errors.hpp"
#include "lscene/pointcloud/scene_field.hpp"
#include "lscene/scenegen/catalog.hpp"

namespace lscene::scenegen {

struct SceneGenConfig {
  std::size_t n_rooms = 4;
  float extent_min = 4.8f;  // room side length range, meters
  float extent_max = 6.2f;
  float corridor = 1.0f;    // gap between neighbouring rooms
  std::size_t grid_columns = 2;
  float floor_density = 120.0f;   // floor points per m^2
  float object_density = 300.0f;  // object points per m^2 of plan footprint
  std::size_t min_object_points = 24;
  std::size_t min_total_points = 4096;
  float feature_noise = 0.05f;
  float small_area = 0.05f;       // plan-area threshold of the small split, m^2
  float clearance = 0.2f;         // plan gap between floor objects and to walls
  float nearest_margin = 0.1f;    // nearest-object answers need this distance gap
  bool balance_classes = true;    // thin questions about frequent target classes

  void validate() const {
    if (n_rooms == 0) throw ConfigError("SceneGenConfig: n_rooms must be at least 1");
    if (!(extent_min > 0.0f) || extent_max < extent_min) {
      throw ConfigError("SceneGenConfig: need 0 < extent_min <= extent_max");
    }
    if (grid_columns == 0) throw ConfigError("SceneGenConfig: grid_columns must be positive");
    if (min_object_points == 0) throw ConfigError("SceneGenConfig: min_object_points must be positive");
  }

  friend bool operator==(const SceneGenConfig&, const SceneGenConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneGenConfig, n_rooms, extent_min, extent_max,
                                                corridor, grid_columns, floor_density,
                                                object_density, min_object_points,
                                                min_total_points, feature_noise, small_area,
                                                clearance, nearest_margin, balance_classes)

// Feature layout: color one-hot | class one-hot (objects and floor).
inline constexpr std::size_t kFeatureDim = kColors.size() + kClassCount;

struct ObjectSpec {
  std::size_t id = 0;  // index into GeneratedScene::objects
  std::size_t kind = 0;
  std::size_t color = 0;
  std::size_t room = 0;
  pointcloud::Vec3 center{};
  pointcloud::Vec3 extent{};  // full side lengths
  std::size_t points = 0;
  std::size_t first_point = 0;  // objects own a contiguous point range
  bool unique_in_scene = false;

  std::string_view class_name() const { return kKinds[kind].name; }
  std::string_view color_name() const { return kColors[color]; }
  float plan_area() const { return extent[0] * extent[1]; }
  float top() const { return center[2] + 0.5f * extent[2]; }
};

struct RoomSpec {
  std::array<float, 2> origin{};  // min corner in plan
  std::array<float, 2> extent{};
  RoomType type = RoomType::kKitchen;
  std::vector<std::size_t> objects;  // ids in placement order

  float area() const { return extent[0] * extent[1]; }
};

struct GeneratedScene {
  pointcloud::SceneField field;
  std::vector<RoomSpec> rooms;
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 0;

  float plan_area() const {
    float a = 0;
    for (const auto& r : rooms) a += r.area();
    return a;
  }
};

inline std::string scene_id_for(std::uint64_t seed) { return "xr" + std::to_string(seed); }

namespace detail {

inline bool plan_overlap(const pointcloud::Vec3& ca, const pointcloud::Vec3& ea,
                         const pointcloud::Vec3& cb, const pointcloud::Vec3& eb, float gap) {
  return std::abs(ca[0] - cb[0]) < 0.5f * (ea[0] + eb[0]) + gap &&
         std::abs(ca[1] - cb[1]) < 0.5f * (ea[1] + eb[1]) + gap;
}

inline void append_point(pointcloud::SceneField& f, const pointcloud::Vec3& p,
                         std::optional<std::size_t> color, std::size_t cls, float noise,
                         std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, noise);
  std::array<float, kFeatureDim> feat{};
  if (color) feat[*color] = 1.0f;
  feat[kColors.size() + cls] = 1.0f;
  for (auto& v : feat) v += noise > 0.0f ? n(rng) : 0.0f;
  f.push_back(p, feat);
}

// Places one object of `kind` in `room`; nullopt when no spot is found.
inline std::optional<ObjectSpec> place(const RoomSpec& room, std::size_t kind,
                                       std::span<const std::string_view> parents,
                                       const std::vector<ObjectSpec>& placed,
                                       const SceneGenConfig& cfg, std::mt19937_64& rng) {
  const auto& k = kKinds[kind];
  // Furniture may be rotated by 90 degrees in plan.
  const bool rotate = std::bernoulli_distribution(0.5)(rng);
  ObjectSpec o;
  o.kind = kind;
  o.extent = {rotate ? k.size[1] : k.size[0], rotate ? k.size[0] : k.size[1], k.size[2]};
  o.color = std::uniform_int_distribution<std::size_t>(0, kColors.size() - 1)(rng);
  constexpr int kTries = 60;
  if (!k.on_furniture) {
    const float lo_x = room.origin[0] + cfg.clearance + 0.5f * o.extent[0];
    const float hi_x = room.origin[0] + room.extent[0] - cfg.clearance - 0.5f * o.extent[0];
    const float lo_y = room.origin[1] + cfg.clearance + 0.5f * o.extent[1];
    const float hi_y = room.origin[1] + room.extent[1] - cfg.clearance - 0.5f * o.extent[1];
    if (hi_x < lo_x || hi_y < lo_y) return std::nullopt;
    std::uniform_real_distribution<float> ux(lo_x, hi_x), uy(lo_y, hi_y);
    for (int t = 0; t < kTries; ++t) {
      o.center = {ux(rng), uy(rng), 0.5f * o.extent[2]};
      bool clash = false;
      for (std::size_t id : room.objects) {
        const auto& other = placed[id];
        if (kKinds[other.kind].on_furniture) continue;
        if (plan_overlap(o.center, o.extent, other.center, other.extent, cfg.clearance)) {
          clash = true;
          break;
        }
      }
      if (!clash) return o;
    }
    return std::nullopt;
  }
  for (std::string_view parent_name : parents) {
    const std::size_t pk = kind_index(parent_name);
    for (std::size_t pid : room.objects) {
      const auto& parent = placed[pid];
      if (parent.kind != pk) continue;
      const float sx = 0.5f * (parent.extent[0] - o.extent[0]);
      const float sy = 0.5f * (parent.extent[1] - o.extent[1]);
      if (sx < 0.0f || sy < 0.0f) continue;
      std::uniform_real_distribution<float> ux(-sx, sx), uy(-sy, sy);
      for (int t = 0; t < kTries; ++t) {
        o.center = {parent.center[0] + ux(rng), parent.center[1] + uy(rng),
                    parent.top() + 0.5f * o.extent[2]};
        bool clash = false;
        for (std::size_t id : room.objects) {
          const auto& other = placed[id];
          if (!kKinds[other.kind].on_furniture) continue;
          if (plan_overlap(o.center, o.extent, other.center, other.extent, 0.02f)) {
            clash = true;
            break;
          }
        }
        if (!clash) return o;
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Rooms are tiled on a grid of cells sized for the largest room plus a
// corridor, so rooms never overlap. Room types are drawn without replacement
// while n_rooms <= 6. Point order: object points (object id order), then floor.
inline GeneratedScene generate_scene(std::uint64_t seed, const SceneGenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed ^ 0xC3A5C85C97CB3127ULL);
  GeneratedScene scene;
  scene.seed = seed;
  scene.field.scene_id = scene_id_for(seed);
  scene.field.feature_dim = kFeatureDim;

  std::vector<RoomType> types;
  while (types.size() < cfg.n_rooms) {
    std::vector<RoomType> pool(kRoomTypes.begin(), kRoomTypes.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    for (RoomType t : pool) {
      if (types.size() < cfg.n_rooms) types.push_back(t);
    }
  }
  const float cell = cfg.extent_max + cfg.corridor;
  std::uniform_real_distribution<float> ext(cfg.extent_min, cfg.extent_max);
  for (std::size_t r = 0; r < cfg.n_rooms; ++r) {
    RoomSpec room;
    room.type = types[r];
    room.extent = {ext(rng), ext(rng)};
    room.origin = {static_cast<float>(r % cfg.grid_columns) * cell,
                   static_cast<float>(r / cfg.grid_columns) * cell};
    for (const Slot& slot : room_template(room.type)) {
      if (!std::bernoulli_distribution(slot.probability)(rng)) continue;
      auto o = detail::place(room, kind_index(slot.kind), slot.parents, scene.objects, cfg, rng);
      if (!o) continue;
      o->id = scene.objects.size();
      o->room = r;
      room.objects.push_back(o->id);
      scene.objects.push_back(*o);
    }
    scene.rooms.push_back(std::move(room));
  }

  std::vector<std::size_t> class_count(kKinds.size(), 0);
  for (const auto& o : scene.objects) ++class_count[o.kind];
  for (auto& o : scene.objects) o.unique_in_scene = class_count[o.kind] == 1;

  for (auto& o : scene.objects) {
    o.points = std::max(cfg.min_object_points,
                        static_cast<std::size_t>(std::lround(cfg.object_density * o.plan_area())));
    o.first_point = scene.field.size();
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    for (std::size_t i = 0; i < o.points; ++i) {
      const pointcloud::Vec3 p{o.center[0] + u(rng) * o.extent[0], o.center[1] + u(rng) * o.extent[1],
                               o.center[2] + u(rng) * o.extent[2]};
      detail::append_point(scene.field, p, o.color, o.kind, cfg.feature_noise, rng);
    }
  }
  const std::size_t object_points = scene.field.size();
  float density = cfg.floor_density;
  const float area = scene.plan_area();
  if (object_points + static_cast<std::size_t>(density * area) < cfg.min_total_points) {
    density = static_cast<float>(cfg.min_total_points - object_points) / area + 1.0f;
  }
  for (const auto& room : scene.rooms) {
    const auto n = static_cast<std::size_t>(std::ceil(density * room.area()));
    std::uniform_real_distribution<float> ux(room.origin[0], room.origin[0] + room.extent[0]);
    std::uniform_real_distribution<float> uy(room.origin[1], room.origin[1] + room.extent[1]);
    for (std::size_t i = 0; i < n; ++i) {
      detail::append_point(scene.field, {ux(rng), uy(rng), 0.0f}, std::nullopt, kFloorClass,
                           cfg.feature_noise, rng);
    }
  }
  return scene;
}

inline void to_json(nlohmann::json& j, const ObjectSpec& o) {
  j = {{"id", o.id},           {"class", o.class_name()}, {"color", o.color_name()},
       {"room", o.room},       {"center", o.center},      {"extent", o.extent},
       {"points", o.points},   {"first_point", o.first_point},
       {"unique_in_scene", o.unique_in_scene}};
}

inline void to_json(nlohmann::json& j, const RoomSpec& r) {
  j = {{"type", room_name(r.type)}, {"origin", r.origin}, {"extent", r.extent}, {"objects", r.objects}};
}

}  // namespace lscene::scenegen
