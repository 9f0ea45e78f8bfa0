#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "lscene/attention_export.hpp"
#include "lscene/harness/experiment.hpp"
#include "lscene/pointcloud/sampling.hpp"

namespace lscene::harness {

// A default 4-room scene trimmed or densified to exactly `points` points.
inline std::shared_ptr<const pointcloud::SceneField> scene_with_points(std::size_t points,
                                                                       std::uint64_t seed) {
  scenegen::SceneGenConfig sc;
  const auto probe = scenegen::generate_scene(seed, sc);
  sc.floor_density = std::max(sc.floor_density, static_cast<float>(points) / probe.plan_area() + 1.0f);
  sc.min_total_points = points;
  const auto scene = scenegen::generate_scene(seed, sc);
  std::mt19937_64 rng(seed);
  const auto keep = pointcloud::random_sample(scene.field.size(), points, rng);
  return std::make_shared<const pointcloud::SceneField>(scene.field.subset(keep));
}

struct ProbeRow {
  std::size_t points = 0;
  std::uint64_t transformer_macs_on = 0;   // magnifier active, selection pinned
  std::uint64_t transformer_macs_off = 0;  // dense_token_num = 0
  std::uint64_t transformer_macs_baseline = 0;  // every layer standard
  std::uint64_t tokenizer_macs = 0;        // sparse plus dense tokenization, magnifier on
};

inline void to_json(json& j, const ProbeRow& r) {
  j = {{"points", r.points},
       {"transformer_macs_on", r.transformer_macs_on},
       {"transformer_macs_off", r.transformer_macs_off},
       {"transformer_macs_baseline", r.transformer_macs_baseline},
       {"tokenizer_macs", r.tokenizer_macs}};
}

struct ProbeReport {
  std::vector<ProbeRow> rows;
  std::size_t selected_regions = 0;

  bool constant_across_sizes() const {
    for (const auto& r : rows) {
      if (r.transformer_macs_on != rows.front().transformer_macs_on ||
          r.transformer_macs_off != rows.front().transformer_macs_off) {
        return false;
      }
    }
    return !rows.empty();
  }
  double on_off_ratio() const {
    return rows.empty() ? 0.0
                        : static_cast<double>(rows.front().transformer_macs_on) /
                              static_cast<double>(rows.front().transformer_macs_off);
  }
  bool off_matches_baseline() const {
    for (const auto& r : rows) {
      if (r.transformer_macs_off != r.transformer_macs_baseline) return false;
    }
    return !rows.empty();
  }
};

inline void to_json(json& j, const ProbeReport& r) {
  j = {{"rows", r.rows},
       {"selected_regions", r.selected_regions},
       {"constant_across_sizes", r.constant_across_sizes()},
       {"on_off_ratio", r.on_off_ratio()},
       {"off_matches_baseline", r.off_matches_baseline()}};
}

// Transformer MACs of one forward over [sparse vision | question] per scene
// size. Selection is pinned to the top floor(select_frac * S) regions of
// every magnifier layer, so the count depends on token numbers only.
inline ProbeReport complexity_probe(const ModelConfig& base, std::span<const std::size_t> sizes,
                                    std::uint64_t seed, double select_frac = 0.15) {
  ModelConfig on = base;
  if (on.vocab_size == 0) on.vocab_size = scenegen::vocabulary().size();
  if (on.feature_dim == 0) on.feature_dim = scenegen::kFeatureDim;
  on.threshold = 0;
  on.max_select_frac = select_frac;
  on.validate();
  ModelConfig off = on;
  off.dense_token_num = 0;
  ModelConfig baseline = on;
  baseline.n_standard = on.n_layers;
  baseline.n_magnifier = 0;

  const auto question = scenegen::vocabulary().encode("what color is the pot in the kitchen ?");
  const std::vector<model::TextInput> texts{{question, question.size() - 1}};
  auto macs = [&](const ModelConfig& cfg, std::shared_ptr<const pointcloud::SceneField> field,
                  model::ForwardStats* stats, std::size_t* selected) {
    const auto params = model::init_params<float>(cfg, seed);
    tokenizer::ScenePrep prep(std::move(field), cfg);
    numkit::Tape<float> tape;
    const auto bound = model::bind(tape, params, false);
    std::mt19937_64 rng(seed);
    const auto res = model::forward<float>(tape, bound, cfg, prep, texts, rng, {});
    if (stats) *stats = res.stats;
    if (selected && !res.selections.empty()) *selected = res.selections[0][0].selected.size();
    return res.stats.transformer_macs;
  };

  ProbeReport report;
  for (std::size_t n : sizes) {
    const auto field = scene_with_points(n, seed);
    ProbeRow row;
    row.points = n;
    model::ForwardStats stats;
    row.transformer_macs_on = macs(on, field, &stats, &report.selected_regions);
    row.tokenizer_macs = stats.tokenizer_macs;
    row.transformer_macs_off = macs(off, field, nullptr, nullptr);
    row.transformer_macs_baseline = macs(baseline, field, nullptr, nullptr);
    report.rows.push_back(row);
  }
  return report;
}

struct ExportedLayer {
  std::size_t layer = 0;  // model layer index
  std::filesystem::path pgm, overlay;
  selector::SelectionMask mask;
};

// One decoding-phase forward over the question. Per magnifier layer writes
// layer<i>.pgm (the previous layer's sliced hidden-to-sparse map, rows
// normalized to 0-255), layer<i>_overlay.csv (x,y,score,selected per sparse
// token center) and layer<i>_attention.csv; plus selections.jsonl.
template <typename T>
std::vector<ExportedLayer> export_attention(const model::ModelParams<T>& params,
                                            std::shared_ptr<const pointcloud::SceneField> field,
                                            const std::vector<std::size_t>& question,
                                            const std::filesystem::path& dir, std::uint64_t seed) {
  if (question.empty()) throw attention::LayoutError("export_attention: empty question");
  std::filesystem::create_directories(dir);
  const auto& cfg = params.cfg;
  tokenizer::ScenePrep prep(std::move(field), cfg);
  numkit::Tape<T> tape;
  const auto bound = model::bind(tape, params, false);
  std::mt19937_64 rng(seed);
  const std::vector<model::TextInput> texts{{question, question.size() - 1}};
  const auto res = model::forward<T>(tape, bound, cfg, prep, texts, rng, {});

  std::vector<ExportedLayer> out;
  std::vector<selector::SelectionMask> masks;
  for (std::size_t i = 0; i < res.selections.size(); ++i) {
    ExportedLayer e;
    e.layer = cfg.n_standard + i;
    e.mask = res.selections[i][0];
    const std::string stem = "layer" + std::to_string(e.layer);
    e.pgm = dir / (stem + ".pgm");
    e.overlay = dir / (stem + "_overlay.csv");
    attention::write_pgm(e.pgm, res.records[e.layer - 1].sliced_map);
    std::ofstream csv(e.overlay);
    csv << "x,y,score,selected\n";
    csv.precision(9);
    std::vector<bool> chosen(res.centers.size(), false);
    for (std::size_t s : e.mask.selected) chosen[s] = true;
    for (std::size_t s = 0; s < res.centers.size(); ++s) {
      csv << res.centers[s][0] << ',' << res.centers[s][1] << ',' << int(e.mask.scores_u8[s]) << ','
          << (chosen[s] ? 1 : 0) << '\n';
    }
    std::ofstream rec(dir / (stem + "_attention.csv"));
    attention::write_record_csv(rec, res.records[e.layer], cfg.head_agg);
    masks.push_back(e.mask);
    out.push_back(std::move(e));
  }
  std::ofstream jl(dir / "selections.jsonl");
  selector::write_jsonl(jl, masks, cfg.n_standard);
  return out;
}

}  // namespace lscene::harness
