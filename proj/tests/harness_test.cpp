#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lscene/harness.hpp"
#include "support/model_fixture.hpp"

namespace hn = lscene::harness;
namespace sg = lscene::scenegen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

lscene::ModelConfig small_model() {
  lscene::ModelConfig c = lscene::testing::tiny_config();
  c.vocab_size = 0;
  c.feature_dim = 0;
  c.vision_token_num = 16;
  c.downsample_points = 1024;
  c.region_radius = 1.0f;
  c.dense_radius = 0.4f;
  return c;
}

hn::ExperimentSpec small_spec(const std::string& out) {
  hn::ExperimentSpec s;
  s.model = small_model();
  s.train.steps = 3;
  s.train.warmup = 1;
  s.train.questions_per_scene = 4;
  s.data.benchmark.n_scenes = 5;
  s.data.benchmark.test_fraction = 0.2;
  s.eval.max_len = 3;
  s.eval.max_questions_per_scene = 4;
  s.output_dir = (fs::temp_directory_path() / out).string();
  return s;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) n += !line.empty();
  return n;
}

json strip_timing(json j) {
  for (auto& r : j.at("runs")) r.erase("train_seconds");
  return j;
}

}  // namespace

TEST(Spec, JsonRoundTripWithDefaults) {
  const auto spec = json::parse(R"({"model": {"threshold": 64}, "seeds": [1, 2],
                                    "ablation": {"axis": "dense_token_num", "values": [2, 4, 6]}})")
                        .get<hn::ExperimentSpec>();
  EXPECT_EQ(spec.model.threshold, 64);
  EXPECT_EQ(spec.model.dense_token_num, 4u);
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(json(spec).get<hn::ExperimentSpec>().model, spec.model);
  const auto cells = hn::expand_cells(spec.ablation);
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[0].name, "dense_token_num=2");
}

TEST(Spec, CellsDifferOnlyInAblatedField) {
  hn::AblationSpec a;
  a.axis = "threshold";
  a.values = {64, 96, 127};
  const auto base = small_model();
  for (const auto& cell : hn::expand_cells(a)) {
    const auto diff = hn::config_diff(hn::cell_config(base, {"base", json::object()}),
                                      hn::cell_config(base, cell));
    for (const auto& [k, _] : diff.items()) EXPECT_EQ(k, "threshold");
  }
  EXPECT_THROW(hn::cell_config(base, {"bad", {{"thresold", 3}}}), lscene::ConfigError);
}

TEST(Ablation, ThresholdAxisGivesThreeRowsAndIsReproducible) {
  auto spec = small_spec("lscene_harness_threshold");
  spec.ablation.axis = "threshold";
  spec.ablation.values = {64, 96, 127};
  fs::remove_all(spec.output_dir);
  const auto a = hn::run_ablation(spec);
  ASSERT_EQ(a.cells.size(), 3u);
  for (const auto& c : a.cells) {
    EXPECT_EQ(c.runs, 1u) << c.cell;
    EXPECT_GE(c.exact_match, 0.0);
    EXPECT_LE(c.exact_match, 1.0);
    for (double f : c.selected_frac) {
      EXPECT_GT(f, 0.0);
      EXPECT_LE(f, 1.0);
    }
  }
  EXPECT_EQ(count_lines(fs::path(spec.output_dir) / "report.csv"), 4u);
  EXPECT_TRUE(fs::exists(fs::path(spec.output_dir) / "report.json"));
  EXPECT_EQ(count_lines(fs::path(spec.output_dir) / "threshold=64" / "seed0" / "metrics.jsonl"), 3u);
  const auto b = hn::run_ablation(spec);
  EXPECT_EQ(strip_timing(json(a)), strip_timing(json(b)));
  fs::remove_all(spec.output_dir);
}

TEST(Ablation, DenseTokenAxisAndStrategyPairs) {
  auto spec = small_spec("lscene_harness_dense");
  spec.ablation.axis = "dense_token_num";
  spec.ablation.values = {2, 4, 6};
  EXPECT_EQ(hn::run_ablation(spec).cells.size(), 3u);
  spec.ablation.axis = "select_strategy";
  spec.ablation.values = {"attention-map", "random"};
  spec.seeds = {0, 1};
  const auto r = hn::run_ablation(spec);
  ASSERT_EQ(r.runs.size(), 4u);
  EXPECT_EQ(r.runs[0].seed, r.runs[1].seed);
  EXPECT_EQ(r.runs[0].cell, "select_strategy=attention-map");
  EXPECT_EQ(r.runs[1].config_diff.begin().key(), "select_strategy");
  fs::remove_all(spec.output_dir);
}

TEST(Ablation, FailingCellIsRecordedOthersProceed) {
  auto spec = small_spec("lscene_harness_fail");
  spec.ablation.cells = {{"ok", json::object()}, {"broken", {{"threshold", 300}}}};
  const auto r = hn::run_ablation(spec);
  EXPECT_EQ(r.cell("ok").runs, 1u);
  EXPECT_EQ(r.cell("broken").failed, 1u);
  EXPECT_FALSE(r.runs[1].error.empty());
  fs::remove_all(spec.output_dir);
}

TEST(Probe, TransformerMacsConstantAcrossSceneSizes) {
  auto cfg = small_model();
  const std::vector<std::size_t> sizes{5000, 20000};
  const auto r = hn::complexity_probe(cfg, sizes, 3, 0.25);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_TRUE(r.constant_across_sizes());
  EXPECT_TRUE(r.off_matches_baseline());
  EXPECT_GT(r.on_off_ratio(), 1.0);
  EXPECT_EQ(r.selected_regions, 4u);
  EXPECT_LT(r.rows[0].tokenizer_macs, r.rows[1].tokenizer_macs * 2);
}

TEST(Probe, SceneWithExactPointCount) {
  EXPECT_EQ(hn::scene_with_points(12345, 1)->size(), 12345u);
}

TEST(Export, OverlayMatchesSelectorAndCenters) {
  auto cfg = hn::cell_config(small_model(), {"base", json::object()});
  cfg.n_layers = 3;
  cfg.n_magnifier = 2;
  const auto params = lscene::testing::jittered_params<double>(cfg, 4);
  const auto scene = sg::generate_scene(9, {});
  auto field = std::make_shared<const lscene::pointcloud::SceneField>(scene.field);
  const auto dir = fs::temp_directory_path() / "lscene_export";
  fs::remove_all(dir);
  const auto q = sg::vocabulary().encode("what color is the pot in the kitchen ?");
  const auto layers = hn::export_attention(params, field, q, dir, 0);
  ASSERT_EQ(layers.size(), 2u);
  lscene::tokenizer::ScenePrep prep(field, cfg);
  for (const auto& e : layers) {
    const auto img = lscene::attention::read_pgm(e.pgm);
    EXPECT_EQ(img.width, cfg.vision_token_num);
    EXPECT_EQ(img.height, cfg.vision_token_num + q.size());
    const std::size_t query_row = cfg.vision_token_num + q.size() - 1;
    std::vector<std::uint8_t> row(img.pixels.begin() + query_row * img.width,
                                  img.pixels.begin() + (query_row + 1) * img.width);
    EXPECT_EQ(row, e.mask.scores_u8);
    for (std::size_t r = 0; r < img.height; ++r) {
      const auto first = img.pixels.begin() + r * img.width;
      const auto [lo, hi] = std::minmax_element(first, first + img.width);
      if (*lo != *hi) EXPECT_EQ(*hi, 255);
    }
    std::ifstream csv(e.overlay);
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "x,y,score,selected");
    // A non-constant row always has a 255 entry, so the argmax fallback never fires.
    const bool constant = *std::max_element(e.mask.scores_u8.begin(), e.mask.scores_u8.end()) == 0;
    std::size_t s = 0, n_selected = 0;
    for (; std::getline(csv, line); ++s) {
      std::istringstream is(line);
      float x = 0, y = 0;
      int score = 0, selected = 0;
      char c = 0;
      is >> x >> c >> y >> c >> score >> c >> selected;
      EXPECT_EQ(x, prep.centers()[s][0]);
      EXPECT_EQ(y, prep.centers()[s][1]);
      EXPECT_EQ(score, e.mask.scores_u8[s]);
      if (!constant) EXPECT_EQ(selected, score >= cfg.threshold ? 1 : 0);
      n_selected += selected;
    }
    EXPECT_EQ(s, cfg.vision_token_num);
    EXPECT_EQ(n_selected, e.mask.selected.size());
  }
  EXPECT_EQ(count_lines(dir / "selections.jsonl"), 2u);
  fs::remove_all(dir);
}
