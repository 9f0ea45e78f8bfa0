#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lscene/pointcloud/io.hpp"
#include "lscene/scenegen/qa.hpp"

// Dataset directory:
//   scenes/<id>.scnf   point cloud (pointcloud binary format)
//   scenes/<id>.json   rooms and objects (ground truth)
//   qa/<id>.jsonl      one QASample per line
//   meta.json          format_version, seed, generator config, vocabulary,
//                      train/test scene ids, statistics
namespace lscene::scenegen {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDatasetVersion = 1;

struct BenchmarkConfig {
  std::uint64_t seed = 0;
  std::size_t n_scenes = 200;
  double test_fraction = 0.2;  // every round(1 / fraction)-th scene is held out
  bool planning_caption = true;
  SceneGenConfig scene;

  friend bool operator==(const BenchmarkConfig&, const BenchmarkConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BenchmarkConfig, seed, n_scenes, test_fraction,
                                                planning_caption, scene)

inline std::uint64_t scene_seed(std::uint64_t benchmark_seed, std::size_t index) {
  return benchmark_seed * 1000003ULL + index;
}

struct Dataset {
  std::filesystem::path root;
  nlohmann::json meta;
  std::vector<std::string> train_ids, test_ids;
  std::map<std::string, std::vector<QASample>> qa;

  pointcloud::SceneField load_field(const std::string& id) const {
    return pointcloud::read_scnf(root / "scenes" / (id + ".scnf"));
  }
};

struct BenchmarkStats {
  std::size_t scenes = 0;
  double mean_plan_area = 0;
  double mean_points = 0;
  std::map<std::string, std::size_t> questions_per_task;
  std::size_t small_questions = 0;
  std::map<std::string, std::size_t> target_classes;
};

inline void to_json(nlohmann::json& j, const BenchmarkStats& s) {
  j = {{"scenes", s.scenes},
       {"mean_plan_area", s.mean_plan_area},
       {"mean_points", s.mean_points},
       {"questions_per_task", s.questions_per_task},
       {"small_questions", s.small_questions},
       {"target_classes", s.target_classes}};
}

// Generates and writes a benchmark. Throws DatasetError if a sample fails the
// closed-world check.
inline BenchmarkStats write_benchmark(const std::filesystem::path& root, const BenchmarkConfig& bc) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "scenes");
  fs::create_directories(root / "qa");
  BenchmarkStats stats;
  std::vector<std::string> train, test;
  const std::size_t stride =
      bc.test_fraction > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / bc.test_fraction)))
                           : 0;
  for (std::size_t i = 0; i < bc.n_scenes; ++i) {
    const std::uint64_t s = scene_seed(bc.seed, i);
    const auto scene = generate_scene(s, bc.scene);
    auto samples = generate_qa(scene, s, bc.scene);
    if (bc.planning_caption) {
      auto pc = generate_planning_caption(scene);
      samples.insert(samples.end(), pc.begin(), pc.end());
    }
    const std::string& id = scene.field.scene_id;
    pointcloud::write_scnf(scene.field, root / "scenes" / (id + ".scnf"));
    std::ofstream(root / "scenes" / (id + ".json"))
        << nlohmann::json{{"seed", s}, {"rooms", scene.rooms}, {"objects", scene.objects}}.dump() << '\n';
    std::ofstream qa(root / "qa" / (id + ".jsonl"));
    for (const auto& q : samples) {
      if (!answerable(scene, q, bc.scene)) {
        throw DatasetError("write_benchmark: unanswerable sample in " + id + ": " + q.question);
      }
      qa << nlohmann::json(q).dump() << '\n';
      ++stats.questions_per_task[nlohmann::json(q.task).get<std::string>()];
      if (q.split == Split::kSmall) ++stats.small_questions;
      if (q.task == Task::kAttribute) ++stats.target_classes[q.slots.at("class")];
    }
    (stride > 0 && i % stride == stride - 1 ? test : train).push_back(id);
    stats.mean_plan_area += scene.plan_area();
    stats.mean_points += static_cast<double>(scene.field.size());
    ++stats.scenes;
  }
  if (stats.scenes > 0) {
    stats.mean_plan_area /= static_cast<double>(stats.scenes);
    stats.mean_points /= static_cast<double>(stats.scenes);
  }
  const nlohmann::json meta = {{"format_version", kDatasetVersion},
                               {"config", bc},
                               {"feature_dim", kFeatureDim},
                               {"vocabulary", vocabulary().words()},
                               {"train", train},
                               {"test", test},
                               {"statistics", stats}};
  std::ofstream(root / "meta.json") << meta.dump(2) << '\n';
  return stats;
}

inline Dataset read_dataset(const std::filesystem::path& root) {
  std::ifstream is(root / "meta.json");
  if (!is) throw DatasetError("read_dataset: missing " + (root / "meta.json").string());
  Dataset d;
  d.root = root;
  d.meta = nlohmann::json::parse(is);
  if (d.meta.at("format_version").get<int>() != kDatasetVersion) {
    throw DatasetError("read_dataset: unsupported format_version");
  }
  if (d.meta.at("vocabulary").get<std::vector<std::string>>() != vocabulary().words()) {
    throw DatasetError("read_dataset: vocabulary differs from this build");
  }
  d.meta.at("train").get_to(d.train_ids);
  d.meta.at("test").get_to(d.test_ids);
  for (const auto* ids : {&d.train_ids, &d.test_ids}) {
    for (const auto& id : *ids) {
      std::ifstream qa(root / "qa" / (id + ".jsonl"));
      if (!qa) throw DatasetError("read_dataset: missing qa file for " + id);
      auto& list = d.qa[id];
      for (std::string line; std::getline(qa, line);) {
        if (!line.empty()) list.push_back(nlohmann::json::parse(line).get<QASample>());
      }
    }
  }
  return d;
}

}  // namespace lscene::scenegen
