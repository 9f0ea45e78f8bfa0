#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lscene/attention.hpp"
#include "lscene/config.hpp"
#include "lscene/pointcloud/sampling.hpp"

// Parameter-free choice of the sparse regions to magnify, driven by one
// attention row over the sparse vision tokens.
namespace lscene::selector {

struct SelectionMask {
  std::vector<std::uint8_t> scores_u8;
  int threshold = 0;
  std::vector<std::size_t> selected;  // sorted, never empty
  SelectStrategy strategy = SelectStrategy::kAttentionMap;

  double fraction() const {
    return scores_u8.empty() ? 0.0
                             : static_cast<double>(selected.size()) / scores_u8.size();
  }
};

// Sliced, head-aggregated row of `record` at `query_position`.
inline std::vector<double> extract_query_row(const attention::AttentionRecord& record,
                                             std::size_t query_position) {
  const auto& m = record.sliced_map;
  if (query_position >= m.rows()) {
    throw std::out_of_range("extract_query_row: position " + std::to_string(query_position) +
                            " outside " + std::to_string(m.rows()) + " rows");
  }
  auto row = m.row(query_position);
  return {row.begin(), row.end()};
}

// round(255 (x - min) / (max - min)), half away from zero; constant input
// maps to zeros.
inline std::vector<std::uint8_t> normalize_to_u8(std::span<const double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_to_u8: empty row");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<std::uint8_t> out(raw.size(), 0);
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::round(255.0 * (raw[i] - lo) / (hi - lo));
    out[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

inline std::size_t argmax_index(std::span<const std::uint8_t> scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

// Indices scoring at least `threshold`, or the first argmax alone when none
// do. A positive `max_select_frac` keeps only the top max(1, floor(frac S))
// by score, ties to the lower index. The random strategy draws the same
// number of indices uniformly.
inline SelectionMask select(std::span<const std::uint8_t> scores, int threshold,
                            SelectStrategy strategy, std::mt19937_64& rng,
                            double max_select_frac = 0.0) {
  if (threshold < 0 || threshold > 255) {
    throw ConfigError("select: threshold " + std::to_string(threshold) + " outside [0, 255]");
  }
  if (scores.empty()) throw std::invalid_argument("select: empty score vector");
  SelectionMask m;
  m.scores_u8.assign(scores.begin(), scores.end());
  m.threshold = threshold;
  m.strategy = strategy;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) m.selected.push_back(i);
  }
  if (m.selected.empty()) m.selected.push_back(argmax_index(scores));
  if (max_select_frac > 0.0) {
    const auto cap = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(max_select_frac * static_cast<double>(scores.size()))));
    if (m.selected.size() > cap) {
      std::stable_sort(m.selected.begin(), m.selected.end(),
                       [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
      m.selected.resize(cap);
      std::sort(m.selected.begin(), m.selected.end());
    }
  }
  if (strategy == SelectStrategy::kRandom) {
    m.selected = pointcloud::random_sample(scores.size(), m.selected.size(), rng);
  }
  return m;
}

inline SelectionMask select(std::span<const std::uint8_t> scores, const ModelConfig& cfg,
                            std::mt19937_64& rng) {
  return select(scores, cfg.threshold, cfg.select_strategy, rng, cfg.max_select_frac);
}

enum class Phase { kTraining, kDecoding };

// [vision | instruction | answer] with contiguous spans.
struct SequenceLayout {
  std::size_t vision = 0;
  std::vector<std::size_t> instruction;
  std::vector<std::size_t> answer;

  std::size_t text_size() const { return instruction.size() + answer.size(); }
  std::size_t total() const { return vision + text_size(); }
};

// Training reads the last instruction token. Decoding reads the current
// last token, so with a answer tokens emitted so far it is vision + L_i + a - 1.
inline std::size_t choose_query_position(const SequenceLayout& layout, Phase phase) {
  if (layout.text_size() == 0) {
    throw attention::LayoutError("choose_query_position: sequence has no text tokens");
  }
  if (phase == Phase::kTraining) {
    if (layout.instruction.empty()) {
      throw attention::LayoutError("choose_query_position: no instruction tokens");
    }
    return layout.vision + layout.instruction.size() - 1;
  }
  return layout.total() - 1;
}

inline nlohmann::json to_json(std::size_t layer, const SelectionMask& m) {
  return {{"layer", layer},
          {"threshold", m.threshold},
          {"strategy", m.strategy},
          {"scores_u8", m.scores_u8},
          {"selected", m.selected}};
}

inline void write_jsonl(std::ostream& os, std::span<const SelectionMask> masks,
                        std::size_t first_layer) {
  for (std::size_t i = 0; i < masks.size(); ++i) {
    os << to_json(first_layer + i, masks[i]).dump() << '\n';
  }
}

}  // namespace lscene::selector
