#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "lscene/model.hpp"
#include "support/gradcheck.hpp"
#include "support/model_fixture.hpp"
#include "support/naive_model.hpp"

namespace md = lscene::model;
namespace nk = lscene::numkit;
namespace tk = lscene::tokenizer;
namespace lt = lscene::testing;
using lscene::ModelConfig;
using nk::Tape;
using nk::Tensor;

namespace {

struct Logits {
  Tensor<double> value;
  md::ForwardResult<double> res;
};

Logits run(const md::ModelParams<double>& p, tk::ScenePrep& prep,
           const std::vector<md::TextInput>& texts, std::uint64_t seed = 0,
           const md::ForwardOptions& opt = {}) {
  Tape<double> tape;
  const auto bound = md::bind(tape, p, false);
  std::mt19937_64 rng(seed);
  auto res = md::forward<double>(tape, bound, p.cfg, prep, texts, rng, opt);
  return {res.logits.value(), std::move(res)};
}

std::vector<std::size_t> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> u(0, vocab - 1);
  std::vector<std::size_t> t(n);
  for (auto& v : t) v = u(rng);
  return t;
}

double max_diff(const Tensor<double>& a, const naive::Mat& b, std::size_t row_offset = 0) {
  double m = 0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      m = std::max(m, std::abs(a(r, c) - b[r + row_offset][c]));
    }
  }
  return m;
}

}  // namespace

TEST(ModelForward, MatchesNaiveOracle) {
  const ModelConfig cfg = lt::tiny_config();
  std::mt19937_64 rng(1);
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto params = lt::jittered_params<double>(cfg, 10 + i);
    tk::ScenePrep prep(lt::blob_scene(20 + i, 600, cfg.feature_dim), cfg);
    const auto tokens = random_tokens(rng, 6, cfg.vocab_size);
    const std::size_t query = 3;
    const auto lib = run(params, prep, {{tokens, query}});
    const auto ref = naive::model_forward(params, prep, tokens, query);
    EXPECT_LT(max_diff(lib.value, ref), 1e-8) << i;
    ASSERT_EQ(lib.res.selections.size(), 1u);
  }
}

TEST(ModelForward, NoMagnifierIsVanillaTransformer) {
  ModelConfig cfg = lt::tiny_config();
  cfg.n_standard = 2;
  cfg.n_magnifier = 0;
  const auto params = lt::jittered_params<double>(cfg, 3);
  tk::ScenePrep prep(lt::blob_scene(4, 500, cfg.feature_dim), cfg);
  std::mt19937_64 rng(5);
  const auto tokens = random_tokens(rng, 5, cfg.vocab_size);
  const auto lib = run(params, prep, {{tokens, 4}});
  EXPECT_LT(max_diff(lib.value, naive::model_forward(params, prep, tokens, 4)), 1e-8);
  EXPECT_TRUE(lib.res.selections.empty());
  for (const auto& r : lib.res.records) EXPECT_EQ(r.n_dense, 0u);
}

TEST(ModelForward, Threshold255GivesExactlyKDenseTokens) {
  ModelConfig cfg = lt::tiny_config();
  cfg.threshold = 255;
  cfg.n_layers = 3;
  cfg.n_magnifier = 2;
  const auto params = lt::jittered_params<double>(cfg, 6);
  tk::ScenePrep prep(lt::blob_scene(7, 500, cfg.feature_dim), cfg);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto lib = run(params, prep, {{random_tokens(rng, 4, cfg.vocab_size), 2}});
    for (std::size_t l = 0; l < lib.res.selections.size(); ++l) {
      const auto& m = lib.res.selections[l][0];
      const auto top = std::count(m.scores_u8.begin(), m.scores_u8.end(), 255);
      if (top == 1) EXPECT_EQ(lib.res.records[cfg.n_standard + l].n_dense, cfg.dense_token_num);
    }
  }
}

TEST(ModelForward, SequenceLengthConstantAcrossLayers) {
  const ModelConfig cfg = lt::tiny_config();
  const auto params = lt::jittered_params<double>(cfg, 9);
  tk::ScenePrep prep(lt::blob_scene(10, 500, cfg.feature_dim), cfg);
  const auto lib = run(params, prep, {{{1, 2, 3, 4, 5}, 4}});
  EXPECT_EQ(lib.value.rows(), cfg.vision_token_num + 5);
  for (const auto& r : lib.res.records) {
    EXPECT_EQ(r.weights[0].rows(), cfg.vision_token_num + 5);
    EXPECT_EQ(r.sliced_map.cols(), cfg.vision_token_num);
  }
}

TEST(ModelForward, StrategiesDifferOnlyThroughSelection) {
  ModelConfig a = lt::tiny_config();
  ModelConfig b = a;
  b.select_strategy = lscene::SelectStrategy::kRandom;
  auto pa = lt::jittered_params<double>(a, 11);
  auto pb = pa;
  pb.cfg = b;
  tk::ScenePrep prep(lt::blob_scene(12, 500, a.feature_dim), a);
  md::ForwardOptions opt;
  opt.forced_selection = std::vector<std::size_t>{1, 5};
  const std::vector<md::TextInput> texts{{{2, 3, 4}, 1}};
  const auto ra = run(pa, prep, texts, 1, opt);
  const auto rb = run(pb, prep, texts, 2, opt);
  EXPECT_EQ(ra.value, rb.value);
}

TEST(ModelForward, PackedSegmentsMatchSeparateForwards) {
  const ModelConfig cfg = lt::tiny_config();
  const auto params = lt::jittered_params<double>(cfg, 13);
  tk::ScenePrep prep(lt::blob_scene(14, 600, cfg.feature_dim), cfg);
  const std::vector<md::TextInput> texts{{{1, 2, 3}, 2}, {{4, 5, 6, 7}, 1}, {{8}, 0}};
  const auto packed = run(params, prep, texts);
  std::size_t row = cfg.vision_token_num;
  for (const auto& t : texts) {
    const auto single = run(params, prep, {t});
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      for (std::size_t c = 0; c < cfg.vocab_size; ++c) {
        EXPECT_NEAR(packed.value(row + i, c), single.value(cfg.vision_token_num + i, c), 1e-10);
      }
    }
    row += t.tokens.size();
  }
}

TEST(ModelForward, MacCountIndependentOfScenePointCount) {
  ModelConfig cfg = lt::tiny_config();
  cfg.threshold = 0;
  cfg.max_select_frac = 0.25;
  const auto params = lt::jittered_params<double>(cfg, 15);
  std::uint64_t first = 0;
  for (std::size_t m : {500u, 2000u, 8000u}) {
    tk::ScenePrep prep(lt::blob_scene(16, m, cfg.feature_dim), cfg);
    const auto r = run(params, prep, {{{1, 2, 3}, 2}});
    if (first == 0) first = r.res.stats.transformer_macs;
    EXPECT_EQ(r.res.stats.transformer_macs, first) << m;
    EXPECT_GT(r.res.stats.tokenizer_macs, 0u);
  }
}

TEST(ModelForward, RejectsBadInputs) {
  const ModelConfig cfg = lt::tiny_config();
  const auto params = lt::jittered_params<double>(cfg, 17);
  tk::ScenePrep prep(lt::blob_scene(18, 300, cfg.feature_dim), cfg);
  EXPECT_THROW(run(params, prep, {}), lscene::attention::LayoutError);
  EXPECT_THROW(run(params, prep, {{{}, 0}}), lscene::attention::LayoutError);
  EXPECT_THROW(run(params, prep, {{{1, 2}, 2}}), lscene::attention::LayoutError);
  EXPECT_THROW(run(params, prep, {{{99}, 0}}), lscene::attention::LayoutError);
}

TEST(ModelGradient, EndToEndMatchesFiniteDifferences) {
  const ModelConfig cfg = lt::gradcheck_config();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto params = lt::jittered_params<double>(cfg, 30 + seed);
    tk::ScenePrep prep(lt::blob_scene(40 + seed, 200, cfg.feature_dim), cfg);
    const std::vector<md::TextInput> texts{{{1, 2, 3, 4}, 1}};
    const std::vector<std::size_t> rows{cfg.vision_token_num + 1, cfg.vision_token_num + 2};
    const std::vector<std::size_t> targets{3, 4};
    // Hold the selection at its value at the base point: the selector is
    // piecewise constant and finite differences must not straddle a switch.
    const auto base = run(params, prep, texts);
    md::ForwardOptions opt;
    opt.logit_rows = rows;
    opt.forced_selection = base.res.selections[0][0].selected;

    std::vector<std::string> names;
    std::vector<Tensor<double>> inputs;
    for (const auto& [k, t] : params.tensors) {
      names.push_back(k);
      inputs.push_back(t);
    }
    lt::ScalarFn fn = [&](Tape<double>& tape, const std::vector<nk::Var<double>>& v) {
      md::BoundParams<double> b;
      for (std::size_t i = 0; i < names.size(); ++i) b.vars.emplace(names[i], v[i]);
      std::mt19937_64 rng(0);
      auto res = md::forward<double>(tape, b, cfg, prep, texts, rng, opt);
      return nk::cross_entropy(res.logits, targets);
    };
    const auto r = lt::grad_check(fn, inputs);
    EXPECT_LE(r.worst_relative_error, 1e-3) << names[r.worst_leaf];
  }
}

namespace {

md::TrainSet tiny_train_set(const ModelConfig& cfg) {
  md::TrainSet set;
  for (std::uint64_t s = 0; s < 2; ++s) {
    set.scenes.push_back(std::make_shared<tk::ScenePrep>(lt::blob_scene(50 + s, 400, cfg.feature_dim), cfg));
  }
  set.examples = {{0, {1, 2, 3}, {4, 9}}, {0, {1, 2, 5}, {6, 9}}, {1, {1, 2, 3}, {7, 9}},
                  {1, {1, 2, 5}, {8, 9}}};
  return set;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParamsBitIdentical) {
  const ModelConfig cfg = lt::tiny_config();
  auto params = md::init_params<float>(cfg, 1);
  const auto before = params;
  md::TrainConfig tc;
  tc.steps = 5;
  tc.lr = 0;
  tc.lr_min = 0;
  md::train(params, tiny_train_set(cfg), tc);
  for (const auto& [k, t] : before.tensors) EXPECT_EQ(params.at(k), t) << k;
}

TEST(Train, SameSeedSameLossCurve) {
  ModelConfig cfg = lt::tiny_config();
  cfg.select_strategy = lscene::SelectStrategy::kRandom;
  const auto set = tiny_train_set(cfg);
  md::TrainConfig tc;
  tc.steps = 8;
  tc.scenes_per_step = 2;
  tc.questions_per_scene = 1;
  auto a = md::init_params<float>(cfg, 2);
  auto b = a;
  const auto la = md::train(a, set, tc);
  tc.workers = 2;
  const auto lb = md::train(b, set, tc);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].loss, lb[i].loss) << i;
  for (const auto& [k, t] : a.tensors) EXPECT_EQ(b.at(k), t) << k;
}

TEST(Train, NonFiniteParameterAbortsWithStep) {
  const ModelConfig cfg = lt::tiny_config();
  auto params = md::init_params<float>(cfg, 3);
  params.tensors.at("lm_head")[0] = std::numeric_limits<float>::quiet_NaN();
  md::TrainConfig tc;
  tc.steps = 3;
  try {
    md::train(params, tiny_train_set(cfg), tc);
    FAIL() << "expected TrainingError";
  } catch (const md::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Train, LearningRateSchedule) {
  md::TrainConfig tc;
  tc.steps = 120;
  tc.warmup = 20;
  EXPECT_DOUBLE_EQ(md::learning_rate(tc, 19), tc.lr);
  EXPECT_DOUBLE_EQ(md::learning_rate(tc, 20), tc.lr);
  EXPECT_NEAR(md::learning_rate(tc, 70), 0.5 * (tc.lr + tc.lr_min), 1e-12);
  EXPECT_NEAR(md::learning_rate(tc, 119), tc.lr_min, 1e-7);
}

TEST(Train, OverfitsTinySetAndReproducesAnswers) {
  const ModelConfig cfg = lt::tiny_config();
  auto params = md::init_params<float>(cfg, 4);
  const auto set = tiny_train_set(cfg);
  md::TrainConfig tc;
  tc.steps = 600;
  tc.lr = 3e-3;
  tc.lr_min = 3e-4;
  tc.target_loss = 0.02;
  const auto log = md::train(params, set, tc);
  EXPECT_LT(log.back().loss, 0.05);
  for (const auto& ex : set.examples) {
    std::mt19937_64 rng(0);
    const std::vector<std::vector<std::size_t>> q{ex.instruction};
    const auto ans = md::generate(params, *set.scenes[ex.scene], q, 4, 9, rng);
    EXPECT_EQ(ans[0], ex.answer);
  }
}

TEST(Generate, BoundariesAndDeterminism) {
  const ModelConfig cfg = lt::tiny_config();
  const auto params = md::init_params<double>(cfg, 5);
  tk::ScenePrep prep(lt::blob_scene(60, 400, cfg.feature_dim), cfg);
  const std::vector<std::vector<std::size_t>> qs{{1, 2, 3}, {4, 5}};
  std::mt19937_64 r0(0);
  const auto empty = md::generate(params, prep, qs, 0, 9, r0);
  EXPECT_TRUE(empty[0].empty() && empty[1].empty());
  std::mt19937_64 r1(7), r2(7);
  const auto a = md::generate(params, prep, qs, 5, 9, r1);
  const auto b = md::generate(params, prep, qs, 5, 9, r2);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    std::mt19937_64 r(7);
    const std::vector<std::vector<std::size_t>> one{qs[i]};
    EXPECT_EQ(md::generate(params, prep, one, 5, 9, r)[0], a[i]);
  }
}

TEST(Checkpoint, RoundTrip) {
  const ModelConfig cfg = lt::tiny_config();
  const auto params = md::init_params<float>(cfg, 6);
  const auto path = std::filesystem::temp_directory_path() / "lscene_model_test.lsck";
  md::save_checkpoint(params, path, {{"note", "x"}});
  const auto back = md::load_checkpoint<float>(path);
  EXPECT_EQ(back.cfg, cfg);
  EXPECT_EQ(back.tensors.size(), params.tensors.size());
  for (const auto& [k, t] : params.tensors) EXPECT_EQ(back.at(k), t) << k;
  EXPECT_EQ(md::read_sidecar(path)["extra"]["note"], "x");
  std::filesystem::remove(md::sidecar_path(path));
  EXPECT_THROW(md::load_checkpoint<float>(path), md::CheckpointError);
  std::filesystem::remove(path);
  EXPECT_THROW(md::load_checkpoint<float>(path), md::CheckpointError);
}

TEST(Config, JsonRoundTripAndValidation) {
  ModelConfig cfg = lt::tiny_config();
  cfg.head_agg = lscene::HeadAgg::kMax;
  cfg.sampler = lscene::Sampler::kRandom;
  const nlohmann::json j = cfg;
  EXPECT_EQ(j.at("head_agg"), "max");
  EXPECT_EQ(j.get<ModelConfig>(), cfg);
  ModelConfig bad = cfg;
  bad.n_standard = 0;
  bad.n_magnifier = 2;
  EXPECT_THROW(bad.validate(), lscene::ConfigError);
  bad = cfg;
  bad.threshold = 300;
  EXPECT_THROW(bad.validate(), lscene::ConfigError);
  EXPECT_EQ(nlohmann::json::parse(R"({"threshold": 64})").get<ModelConfig>().threshold, 64);
}
