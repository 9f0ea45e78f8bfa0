#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lscene::scenegen {

enum class RoomType { kKitchen, kBedroom, kOffice, kBathroom, kLivingRoom, kDiningRoom };

inline constexpr std::array<RoomType, 6> kRoomTypes{RoomType::kKitchen,    RoomType::kBedroom,
                                                    RoomType::kOffice,     RoomType::kBathroom,
                                                    RoomType::kLivingRoom, RoomType::kDiningRoom};

// One vocabulary word per room type.
inline std::string_view room_name(RoomType t) {
  switch (t) {
    case RoomType::kKitchen: return "kitchen";
    case RoomType::kBedroom: return "bedroom";
    case RoomType::kOffice: return "office";
    case RoomType::kBathroom: return "bathroom";
    case RoomType::kLivingRoom: return "livingroom";
    case RoomType::kDiningRoom: return "diningroom";
  }
  throw std::invalid_argument("room_name: unknown room type");
}

inline constexpr std::array<std::string_view, 8> kColors{"red",   "green", "blue", "yellow",
                                                         "white", "black", "brown", "gray"};

struct ObjectKind {
  std::string_view name;
  std::array<float, 3> size;  // width (x), depth (y), height (z), meters
  bool on_furniture;          // placed on top of a parent object rather than the floor
};

// Class index = position in this table. Index kFloorClass is the floor.
inline constexpr std::array<ObjectKind, 22> kKinds{{
    {"bed", {2.0f, 1.6f, 0.5f}, false},
    {"wardrobe", {1.2f, 0.6f, 2.0f}, false},
    {"desk", {1.4f, 0.7f, 0.75f}, false},
    {"chair", {0.5f, 0.5f, 0.9f}, false},
    {"sofa", {2.0f, 0.9f, 0.8f}, false},
    {"table", {1.2f, 0.8f, 0.75f}, false},
    {"stove", {0.6f, 0.6f, 0.9f}, false},
    {"fridge", {0.7f, 0.7f, 1.8f}, false},
    {"sink", {0.6f, 0.5f, 0.9f}, false},
    {"cabinet", {1.0f, 0.5f, 0.9f}, false},
    {"toilet", {0.4f, 0.6f, 0.8f}, false},
    {"bathtub", {1.7f, 0.8f, 0.6f}, false},
    {"bookshelf", {0.9f, 0.35f, 1.8f}, false},
    {"tv", {1.2f, 0.3f, 0.7f}, false},
    {"plant", {0.3f, 0.3f, 0.5f}, false},
    {"keyboard", {0.4f, 0.1f, 0.03f}, true},
    {"pot", {0.22f, 0.22f, 0.18f}, true},
    {"cup", {0.09f, 0.09f, 0.1f}, true},
    {"lamp", {0.2f, 0.2f, 0.4f}, true},
    {"book", {0.22f, 0.16f, 0.04f}, true},
    {"towel", {0.3f, 0.2f, 0.05f}, true},
    {"remote", {0.18f, 0.05f, 0.03f}, true},
}};

inline constexpr std::size_t kFloorClass = kKinds.size();
inline constexpr std::size_t kClassCount = kKinds.size() + 1;

inline std::size_t kind_index(std::string_view name) {
  for (std::size_t i = 0; i < kKinds.size(); ++i) {
    if (kKinds[i].name == name) return i;
  }
  throw std::invalid_argument("kind_index: unknown object class '" + std::string(name) + "'");
}

// One furniture slot of a room template. `parents` is only used for objects
// placed on furniture and lists acceptable parent classes in preference order.
struct Slot {
  std::string_view kind;
  double probability;
  std::vector<std::string_view> parents;
};

inline const std::vector<Slot>& room_template(RoomType t) {
  static const std::array<std::vector<Slot>, 6> kTemplates{{
      {{"stove", 1.0, {}},
       {"pot", 1.0, {"stove"}},
       {"fridge", 1.0, {}},
       {"sink", 1.0, {}},
       {"table", 0.6, {}},
       {"cup", 0.7, {"table", "sink"}},
       {"cabinet", 0.5, {}}},
      {{"bed", 1.0, {}},
       {"wardrobe", 1.0, {}},
       {"cabinet", 0.7, {}},
       {"lamp", 0.8, {"cabinet", "wardrobe"}},
       {"book", 0.5, {"cabinet", "bed"}},
       {"plant", 0.4, {}}},
      {{"desk", 1.0, {}},
       {"keyboard", 1.0, {"desk"}},
       {"chair", 1.0, {}},
       {"bookshelf", 0.6, {}},
       {"book", 0.6, {"bookshelf", "desk"}},
       {"lamp", 0.4, {"desk"}}},
      {{"toilet", 1.0, {}},
       {"sink", 1.0, {}},
       {"bathtub", 0.7, {}},
       {"towel", 0.8, {"bathtub", "sink"}}},
      {{"sofa", 1.0, {}},
       {"tv", 1.0, {}},
       {"table", 0.7, {}},
       {"remote", 0.7, {"table", "sofa"}},
       {"plant", 0.6, {}}},
      {{"table", 1.0, {}},
       {"chair", 1.0, {}},
       {"chair", 0.8, {}},
       {"cup", 0.8, {"table"}},
       {"cabinet", 0.5, {}},
       {"plant", 0.4, {}}},
  }};
  return kTemplates[static_cast<std::size_t>(t)];
}

// Planning task templates: a task phrase, the room it happens in and the
// objects used, in order.
struct TaskTemplate {
  std::string_view phrase;
  RoomType room;
  std::array<std::string_view, 2> objects;
};

inline constexpr std::array<TaskTemplate, 6> kTasks{{
    {"boil water", RoomType::kKitchen, {"stove", "pot"}},
    {"sleep", RoomType::kBedroom, {"bed", "wardrobe"}},
    {"type report", RoomType::kOffice, {"desk", "keyboard"}},
    {"freshen up", RoomType::kBathroom, {"toilet", "sink"}},
    {"watch tv", RoomType::kLivingRoom, {"sofa", "tv"}},
    {"eat dinner", RoomType::kDiningRoom, {"table", "chair"}},
}};

}  // namespace lscene::scenegen
