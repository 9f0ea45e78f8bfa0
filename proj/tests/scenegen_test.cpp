#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "lscene/scenegen.hpp"

namespace sg = lscene::scenegen;

namespace {

double mean_area(std::size_t n_rooms, std::size_t seeds) {
  sg::SceneGenConfig cfg;
  cfg.n_rooms = n_rooms;
  double sum = 0;
  for (std::uint64_t s = 0; s < seeds; ++s) sum += sg::generate_scene(s, cfg).plan_area();
  return sum / static_cast<double>(seeds);
}

sg::ObjectSpec make_object(std::size_t id, std::string_view cls, std::string_view color,
                           lscene::pointcloud::Vec3 center) {
  sg::ObjectSpec o;
  o.id = id;
  o.kind = sg::kind_index(cls);
  o.color = static_cast<std::size_t>(std::find(sg::kColors.begin(), sg::kColors.end(), color) -
                                     sg::kColors.begin());
  const auto& size = sg::kKinds[o.kind].size;
  o.extent = {size[0], size[1], size[2]};
  o.center = center;
  return o;
}

sg::GeneratedScene hand_scene(std::vector<sg::ObjectSpec> objects) {
  sg::GeneratedScene s;
  s.field.scene_id = "hand";
  s.rooms.push_back({{0, 0}, {5, 5}, sg::RoomType::kOffice, {}});
  std::map<std::size_t, int> count;
  for (const auto& o : objects) ++count[o.kind];
  for (auto& o : objects) {
    o.unique_in_scene = count[o.kind] == 1;
    s.rooms[0].objects.push_back(o.id);
  }
  s.objects = std::move(objects);
  return s;
}

}  // namespace

TEST(SceneGen, FourRoomMeanAreaBracketsCrossRoomScenes) {
  const double a = mean_area(4, 100);
  EXPECT_GE(a, 100.0);
  EXPECT_LE(a, 160.0);
}

TEST(SceneGen, OneRoomMeanAreaMatchesSingleRoomScans) {
  const double a = mean_area(1, 100);
  EXPECT_GE(a, 25.0);
  EXPECT_LE(a, 35.0);
}

TEST(SceneGen, SameSeedBitIdentical) {
  const sg::SceneGenConfig cfg;
  const auto a = sg::generate_scene(17, cfg);
  const auto b = sg::generate_scene(17, cfg);
  EXPECT_EQ(a.field.positions, b.field.positions);
  EXPECT_EQ(a.field.features, b.field.features);
  EXPECT_EQ(a.field.scene_id, b.field.scene_id);
  EXPECT_EQ(sg::generate_qa(a, 17, cfg), sg::generate_qa(b, 17, cfg));
}

TEST(SceneGen, DifferentSeedsDifferentScenes) {
  const sg::SceneGenConfig cfg;
  const auto a = sg::generate_scene(1, cfg);
  const auto b = sg::generate_scene(2, cfg);
  EXPECT_NE(a.field.scene_id, b.field.scene_id);
  EXPECT_NE(a.field.positions, b.field.positions);
}

TEST(SceneGen, GeometryInvariants) {
  const sg::SceneGenConfig cfg;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    EXPECT_GE(scene.field.size(), cfg.min_total_points);
    EXPECT_EQ(scene.field.feature_dim, sg::kFeatureDim);
    for (std::size_t i = 0; i < scene.rooms.size(); ++i) {
      const auto& r = scene.rooms[i];
      EXPECT_GT(r.extent[0], 0.0f);
      EXPECT_GT(r.extent[1], 0.0f);
      for (std::size_t j = i + 1; j < scene.rooms.size(); ++j) {
        const auto& q = scene.rooms[j];
        const bool apart = r.origin[0] + r.extent[0] <= q.origin[0] ||
                           q.origin[0] + q.extent[0] <= r.origin[0] ||
                           r.origin[1] + r.extent[1] <= q.origin[1] ||
                           q.origin[1] + q.extent[1] <= r.origin[1];
        EXPECT_TRUE(apart) << s << " rooms " << i << "," << j;
      }
    }
    for (const auto& o : scene.objects) {
      const auto& r = scene.rooms[o.room];
      for (int a = 0; a < 2; ++a) {
        EXPECT_GE(o.center[a] - 0.5f * o.extent[a], r.origin[a] - 1e-4f);
        EXPECT_LE(o.center[a] + 0.5f * o.extent[a], r.origin[a] + r.extent[a] + 1e-4f);
      }
      for (std::size_t p = o.first_point; p < o.first_point + o.points; ++p) {
        const auto pos = scene.field.position(p);
        for (int a = 0; a < 3; ++a) {
          EXPECT_LE(std::abs(pos[a] - o.center[a]), 0.5f * o.extent[a] + 1e-4f);
        }
        const auto f = scene.field.feature(p);
        EXPECT_GT(f[o.color], 0.5f);
        EXPECT_GT(f[sg::kColors.size() + o.kind], 0.5f);
      }
    }
  }
}

TEST(SceneGen, KitchenKeepsStoveAndPot) {
  const sg::SceneGenConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    for (const auto& r : scene.rooms) {
      if (r.type != sg::RoomType::kKitchen) continue;
      std::vector<std::string_view> names;
      for (std::size_t id : r.objects) names.push_back(scene.objects[id].class_name());
      EXPECT_NE(std::find(names.begin(), names.end(), "stove"), names.end());
      EXPECT_NE(std::find(names.begin(), names.end(), "pot"), names.end());
    }
  }
}

TEST(SceneGenQA, RedKeyboardIsSmallSplitAttribute) {
  auto scene = hand_scene({make_object(0, "desk", "brown", {2, 2, 0.375f}),
                           make_object(1, "keyboard", "red", {2, 2, 0.765f})});
  sg::SceneGenConfig cfg;
  cfg.balance_classes = false;
  const auto qa = sg::generate_qa(scene, 0, cfg);
  const auto it = std::find_if(qa.begin(), qa.end(), [](const sg::QASample& q) {
    return q.task == sg::Task::kAttribute && q.slots.at("class") == "keyboard";
  });
  ASSERT_NE(it, qa.end());
  EXPECT_EQ(it->question, "what color is the keyboard in the office ?");
  EXPECT_EQ(it->answer, "red <eos>");
  EXPECT_NEAR(it->target_area, 0.04f, 1e-6f);
  EXPECT_EQ(it->split, sg::Split::kSmall);
  const auto desk = std::find_if(qa.begin(), qa.end(), [](const sg::QASample& q) {
    return q.task == sg::Task::kAttribute && q.slots.at("class") == "desk";
  });
  ASSERT_NE(desk, qa.end());
  EXPECT_EQ(desk->split, sg::Split::kStandard);
}

TEST(SceneGenQA, NoUniqueObjectsGivesNoQuestions) {
  const auto scene = hand_scene({make_object(0, "chair", "red", {1, 1, 0.45f}),
                                 make_object(1, "chair", "blue", {3, 3, 0.45f})});
  EXPECT_TRUE(sg::generate_qa(scene, 0, {}).empty());
}

TEST(SceneGenQA, NearestAnswerMatchesExhaustiveSearch) {
  const sg::SceneGenConfig cfg;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    for (const auto& q : sg::generate_qa(scene, s, cfg)) {
      if (q.task != sg::Task::kNearest) continue;
      const auto& t = scene.objects.at(*q.target);
      double best = 1e30;
      std::string best_class;
      for (const auto& o : scene.objects) {
        if (o.id == t.id) continue;
        double d2 = 0;
        for (int a = 0; a < 3; ++a) {
          const double d = static_cast<double>(o.center[a]) - t.center[a];
          d2 += d * d;
        }
        if (d2 < best) {
          best = d2;
          best_class = std::string(o.class_name());
        }
      }
      EXPECT_EQ(q.answer, best_class + " <eos>") << q.question;
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(SceneGenQA, TargetClassesRoughlyBalanced) {
  const sg::SceneGenConfig cfg;
  std::map<std::string, std::size_t> hist;
  for (std::uint64_t s = 0; s < 100; ++s) {
    for (const auto& q : sg::generate_qa(sg::generate_scene(s, cfg), s, cfg)) {
      if (q.task == sg::Task::kAttribute) ++hist[q.slots.at("class")];
    }
  }
  EXPECT_EQ(hist.size(), sg::kKinds.size());
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& [_, n] : hist) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  EXPECT_LE(static_cast<double>(hi), 2.0 * static_cast<double>(lo));
}

TEST(SceneGenQA, EverySampleAnswerableAndSmallSplitNonEmpty) {
  const sg::SceneGenConfig cfg;
  std::size_t small = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    auto all = sg::generate_qa(scene, s, cfg);
    const auto pc = sg::generate_planning_caption(scene);
    all.insert(all.end(), pc.begin(), pc.end());
    for (const auto& q : all) {
      EXPECT_TRUE(sg::answerable(scene, q, cfg)) << q.question;
      EXPECT_EQ(q.split == sg::Split::kSmall, q.target_area > 0 && q.target_area <= cfg.small_area);
      sg::vocabulary().encode(q.question);
      sg::vocabulary().encode(q.answer);
      small += q.split == sg::Split::kSmall;
    }
  }
  EXPECT_GT(small, 0u);
}

TEST(SceneGenPlanning, BoilWaterUsesStoveThenPot) {
  const sg::SceneGenConfig cfg;
  std::size_t seen = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    for (const auto& q : sg::generate_planning_caption(scene)) {
      if (q.question != "plan boil water") continue;
      EXPECT_EQ(q.answer, "go to kitchen ; use stove ; use pot <eos>");
      ++seen;
    }
  }
  EXPECT_GT(seen, 0u);
}

TEST(SceneGenPlanning, CaptionIsRoomInventory) {
  const sg::SceneGenConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = sg::generate_scene(s, cfg);
    for (const auto& q : sg::generate_planning_caption(scene)) {
      if (q.task != sg::Task::kCaption) continue;
      const auto& room = *std::find_if(scene.rooms.begin(), scene.rooms.end(), [&](const auto& r) {
        return sg::room_name(r.type) == q.slots.at("room");
      });
      std::multiset<std::string> expected, got;
      for (std::size_t id : room.objects) expected.emplace(scene.objects[id].class_name());
      std::istringstream is(q.answer);
      for (std::string w; is >> w;) {
        if (w != "<eos>") got.insert(w);
      }
      EXPECT_EQ(got, expected) << q.question;
    }
  }
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  const auto& v = sg::vocabulary();
  EXPECT_EQ(v.word(sg::kPad), "<pad>");
  EXPECT_EQ(v.word(sg::kEos), "<eos>");
  const std::string text = "what color is the pot in the kitchen ?";
  EXPECT_EQ(v.decode(v.encode(text)), text);
  EXPECT_THROW(v.encode("what colour"), std::invalid_argument);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "lscene_scenegen_test";
  std::filesystem::remove_all(dir);
  sg::BenchmarkConfig bc;
  bc.seed = 3;
  bc.n_scenes = 6;
  bc.test_fraction = 0.5;
  const auto stats = sg::write_benchmark(dir, bc);
  EXPECT_EQ(stats.scenes, 6u);
  const auto d = sg::read_dataset(dir);
  EXPECT_EQ(d.train_ids.size(), 3u);
  EXPECT_EQ(d.test_ids.size(), 3u);
  EXPECT_EQ(d.meta.at("config").get<sg::BenchmarkConfig>(), bc);
  const auto scene = sg::generate_scene(sg::scene_seed(3, 0), bc.scene);
  EXPECT_EQ(d.train_ids[0], scene.field.scene_id);
  const auto field = d.load_field(scene.field.scene_id);
  EXPECT_EQ(field.positions, scene.field.positions);
  auto expected = sg::generate_qa(scene, sg::scene_seed(3, 0), bc.scene);
  const auto pc = sg::generate_planning_caption(scene);
  expected.insert(expected.end(), pc.begin(), pc.end());
  EXPECT_EQ(d.qa.at(scene.field.scene_id), expected);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(sg::read_dataset(dir), sg::DatasetError);
}
