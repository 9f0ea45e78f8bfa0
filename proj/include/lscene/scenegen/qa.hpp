#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lscene/scenegen/scene.hpp"

namespace lscene::scenegen {

enum class Task { kAttribute, kNearest, kPlanning, kCaption };
enum class Split { kStandard, kSmall };

NLOHMANN_JSON_SERIALIZE_ENUM(Task, {{Task::kAttribute, "attribute"},
                                    {Task::kNearest, "nearest"},
                                    {Task::kPlanning, "planning"},
                                    {Task::kCaption, "caption"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::kStandard, "standard"}, {Split::kSmall, "small"}})

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kEos = 1;

// Closed word list: specials, template words, rooms, colors, classes.
class Vocabulary {
 public:
  Vocabulary() {
    for (std::string_view w : {"<pad>", "<eos>", "what", "color", "is", "the", "in", "nearest",
                               "to", "?", "plan", "go", "use", ";", "describe", "and"}) {
      add(w);
    }
    for (RoomType t : kRoomTypes) add(room_name(t));
    for (auto c : kColors) add(c);
    for (const auto& k : kKinds) add(k.name);
    for (const auto& t : kTasks) {
      std::istringstream is{std::string(t.phrase)};
      for (std::string w; is >> w;) add(w);
    }
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t id) const { return words_.at(id); }

  std::size_t id(std::string_view w) const {
    auto it = ids_.find(std::string(w));
    if (it == ids_.end()) throw std::invalid_argument("Vocabulary: unknown word '" + std::string(w) + "'");
    return it->second;
  }

  std::vector<std::size_t> encode(std::string_view text) const {
    std::istringstream is{std::string(text)};
    std::vector<std::size_t> out;
    for (std::string w; is >> w;) out.push_back(id(w));
    return out;
  }

  std::string decode(std::span<const std::size_t> ids) const {
    std::string out;
    for (std::size_t i : ids) {
      if (!out.empty()) out += ' ';
      out += i < words_.size() ? words_[i] : "<unk>";
    }
    return out;
  }

  const std::vector<std::string>& words() const { return words_; }

 private:
  void add(std::string_view w) {
    if (ids_.contains(std::string(w))) return;
    ids_.emplace(std::string(w), words_.size());
    words_.emplace_back(w);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

inline const Vocabulary& vocabulary() {
  static const Vocabulary v;
  return v;
}

struct QASample {
  std::string scene_id;
  Task task = Task::kAttribute;
  std::string question;  // space-separated vocabulary words
  std::string answer;    // ends with <eos>
  std::map<std::string, std::string> slots;
  std::optional<std::size_t> target;  // object id
  float target_area = 0.0f;
  Split split = Split::kStandard;

  friend bool operator==(const QASample&, const QASample&) = default;
};

inline void to_json(nlohmann::json& j, const QASample& s) {
  j = {{"scene_id", s.scene_id}, {"task", s.task},   {"question", s.question},
       {"answer", s.answer},     {"slots", s.slots}, {"target_area", s.target_area},
       {"split", s.split}};
  j["target"] = s.target ? nlohmann::json(*s.target) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, QASample& s) {
  j.at("scene_id").get_to(s.scene_id);
  j.at("task").get_to(s.task);
  j.at("question").get_to(s.question);
  j.at("answer").get_to(s.answer);
  s.slots = j.value("slots", std::map<std::string, std::string>{});
  s.target = j.at("target").is_null() ? std::nullopt : std::optional(j.at("target").get<std::size_t>());
  s.target_area = j.value("target_area", 0.0f);
  j.at("split").get_to(s.split);
}

inline Split split_for(float plan_area, const SceneGenConfig& cfg) {
  return plan_area <= cfg.small_area ? Split::kSmall : Split::kStandard;
}

// Attribute questions per class over 100 default 4-room scenes with every
// question kept. Questions are kept with probability min(1, 50 / frequency)
// so frequent classes are thinned toward the rare ones.
inline constexpr std::array<double, kKinds.size()> kMeasuredClassFrequency{
    71, 71, 63, 36, 71, 47, 70, 70, 55, 37, 63, 42, 42, 71, 55, 63, 70, 54, 53, 43, 51, 54};

inline double class_keep_probability(std::size_t kind) {
  return std::min(1.0, 50.0 / kMeasuredClassFrequency.at(kind));
}

// Brute-force nearest other object by 3D center distance; nullopt when the
// runner-up is within `margin` of the winner.
inline std::optional<std::size_t> nearest_object(const GeneratedScene& scene, std::size_t id,
                                                 float margin) {
  const auto& o = scene.objects.at(id);
  std::vector<std::pair<float, std::size_t>> d;
  for (const auto& other : scene.objects) {
    if (other.id == id) continue;
    d.emplace_back(std::sqrt(pointcloud::squared_distance(o.center, other.center)), other.id);
  }
  if (d.empty()) return std::nullopt;
  std::sort(d.begin(), d.end());
  if (d.size() > 1 && d[1].first - d[0].first < margin &&
      scene.objects[d[1].second].kind != scene.objects[d[0].second].kind) {
    return std::nullopt;
  }
  return d[0].second;
}

inline bool room_type_unique(const GeneratedScene& scene, RoomType t) {
  return std::count_if(scene.rooms.begin(), scene.rooms.end(),
                       [&](const RoomSpec& r) { return r.type == t; }) == 1;
}

// Attribute and nearest-object questions about objects unique in the scene.
// Empty when the scene has no unique object.
inline std::vector<QASample> generate_qa(const GeneratedScene& scene, std::uint64_t seed,
                                         const SceneGenConfig& cfg) {
  std::mt19937_64 rng(seed ^ 0x9AE16A3B2F90404FULL);
  std::vector<QASample> out;
  for (const auto& o : scene.objects) {
    if (!o.unique_in_scene) continue;
    if (cfg.balance_classes && !std::bernoulli_distribution(class_keep_probability(o.kind))(rng)) {
      continue;
    }
    const std::string cls(o.class_name());
    const std::string room(room_name(scene.rooms[o.room].type));
    QASample a;
    a.scene_id = scene.field.scene_id;
    a.task = Task::kAttribute;
    a.question = "what color is the " + cls + " in the " + room + " ?";
    a.answer = std::string(o.color_name()) + " <eos>";
    a.slots = {{"template", "attribute"}, {"class", cls}, {"room", room}};
    a.target = o.id;
    a.target_area = o.plan_area();
    a.split = split_for(o.plan_area(), cfg);
    out.push_back(a);

    if (const auto n = nearest_object(scene, o.id, cfg.nearest_margin)) {
      QASample q = a;
      q.task = Task::kNearest;
      q.question = "what is nearest to the " + cls + " ?";
      q.answer = std::string(scene.objects[*n].class_name()) + " <eos>";
      q.slots = {{"template", "nearest"}, {"class", cls}};
      out.push_back(q);
    }
  }
  return out;
}

// Planning: "plan <task>" -> "go to <room> ; use <a> ; use <b> <eos>" when the
// room type occurs once and holds both objects. Caption: "describe the
// <room>" -> the room's object classes in placement order.
inline std::vector<QASample> generate_planning_caption(const GeneratedScene& scene) {
  std::vector<QASample> out;
  for (const auto& t : kTasks) {
    if (!room_type_unique(scene, t.room)) continue;
    const auto& room = *std::find_if(scene.rooms.begin(), scene.rooms.end(),
                                     [&](const RoomSpec& r) { return r.type == t.room; });
    bool has_all = true;
    for (auto name : t.objects) {
      has_all = has_all && std::any_of(room.objects.begin(), room.objects.end(), [&](std::size_t id) {
                  return scene.objects[id].class_name() == name;
                });
    }
    if (!has_all) continue;
    QASample s;
    s.scene_id = scene.field.scene_id;
    s.task = Task::kPlanning;
    s.question = "plan " + std::string(t.phrase);
    s.answer = "go to " + std::string(room_name(t.room));
    for (auto name : t.objects) s.answer += " ; use " + std::string(name);
    s.answer += " <eos>";
    s.slots = {{"template", "planning"}, {"task", std::string(t.phrase)}};
    out.push_back(s);
  }
  for (const auto& room : scene.rooms) {
    if (!room_type_unique(scene, room.type) || room.objects.empty()) continue;
    QASample s;
    s.scene_id = scene.field.scene_id;
    s.task = Task::kCaption;
    s.question = "describe the " + std::string(room_name(room.type));
    for (std::size_t id : room.objects) {
      s.answer += std::string(scene.objects[id].class_name()) + " ";
    }
    s.answer += "<eos>";
    s.slots = {{"template", "caption"}, {"room", std::string(room_name(room.type))}};
    out.push_back(s);
  }
  return out;
}

// Closed-world check: every answer is recomputed from ground truth.
inline bool answerable(const GeneratedScene& scene, const QASample& s, const SceneGenConfig& cfg) {
  switch (s.task) {
    case Task::kAttribute: {
      if (!s.target) return false;
      const auto& o = scene.objects.at(*s.target);
      return o.unique_in_scene && s.answer == std::string(o.color_name()) + " <eos>";
    }
    case Task::kNearest: {
      if (!s.target) return false;
      const auto n = nearest_object(scene, *s.target, cfg.nearest_margin);
      return scene.objects.at(*s.target).unique_in_scene && n &&
             s.answer == std::string(scene.objects[*n].class_name()) + " <eos>";
    }
    case Task::kPlanning:
    case Task::kCaption: {
      const auto all = generate_planning_caption(scene);
      return std::find(all.begin(), all.end(), s) != all.end();
    }
  }
  return false;
}

}  // namespace lscene::scenegen
