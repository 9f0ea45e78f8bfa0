#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lscene/attention.hpp"
#include "lscene/model/params.hpp"
#include "lscene/selector.hpp"
#include "lscene/tokenizer.hpp"

namespace lscene::model {

// One question's text tokens. `query` is the offset, inside `tokens`, of the
// row whose attention drives dense selection.
struct TextInput {
  std::vector<std::size_t> tokens;
  std::size_t query = 0;
};

// Teacher forcing reads the last instruction token; decoding reads the last
// token so far.
inline TextInput text_input(const selector::SequenceLayout& layout, selector::Phase phase) {
  TextInput t;
  t.tokens = layout.instruction;
  t.tokens.insert(t.tokens.end(), layout.answer.begin(), layout.answer.end());
  t.query = selector::choose_query_position(layout, phase) - layout.vision;
  return t;
}

struct ForwardOptions {
  // Rows of the final hidden state to project to logits; empty means all.
  std::vector<std::size_t> logit_rows;
  // Replaces the selector output in every magnifier layer and segment.
  std::optional<std::vector<std::size_t>> forced_selection;
};

struct ForwardStats {
  std::uint64_t tokenizer_macs = 0;
  std::uint64_t transformer_macs = 0;
};

template <typename T>
struct ForwardResult {
  Var<T> logits;  // rows x vocab
  attention::AttentionLayout layout;
  std::vector<attention::AttentionRecord> records;             // per layer
  std::vector<std::vector<selector::SelectionMask>> selections;  // per magnifier layer, per segment
  std::vector<tokenizer::Vec3> centers;
  ForwardStats stats;

  double selected_fraction_mean() const {
    double s = 0;
    std::size_t n = 0;
    for (const auto& layer : selections) {
      for (const auto& m : layer) {
        s += m.fraction();
        ++n;
      }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  }
};

// [sparse vision | text segment 0 | text segment 1 | ...]. Segments share
// the vision rows and are otherwise independent sequences. Pre-norm blocks;
// magnifier layers select regions from the previous layer's record at each
// segment's query row.
template <typename T>
ForwardResult<T> forward(Tape<T>& tape, const BoundParams<T>& p, const ModelConfig& cfg,
                         tokenizer::ScenePrep& prep, std::span<const TextInput> texts,
                         std::mt19937_64& rng, const ForwardOptions& opt = {}) {
  numkit::ScopedMacCount total;
  std::uint64_t tok_macs = 0;
  const std::size_t s = cfg.vision_token_num;
  const std::size_t d = cfg.d_model;
  if (prep.centers().size() != s) {
    throw ConfigError("forward: scene prepared for " + std::to_string(prep.centers().size()) +
                      " vision tokens, config expects " + std::to_string(s));
  }
  if (texts.empty()) throw attention::LayoutError("forward: no text segments");

  ForwardResult<T> res;
  res.layout.vision = s;
  std::vector<std::size_t> ids, positions, query_rows;
  std::size_t cursor = s;
  for (const auto& t : texts) {
    if (t.tokens.empty()) throw attention::LayoutError("forward: empty text segment");
    if (t.query >= t.tokens.size()) throw attention::LayoutError("forward: query outside segment");
    res.layout.segments.push_back({cursor, cursor + t.tokens.size(), {}});
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      if (t.tokens[i] >= cfg.vocab_size) throw attention::LayoutError("forward: token id out of range");
      ids.push_back(t.tokens[i]);
      positions.push_back(s + i);
    }
    query_rows.push_back(cursor + t.query);
    cursor += t.tokens.size();
  }
  res.layout.total = cursor;

  tokenizer::SparseTokenSet<T> sparse;
  {
    numkit::ScopedMacCount c;
    sparse = tokenizer::build_sparse_tokens(tape, prep, p.sa("sparse_sa."));
    tok_macs += c.elapsed();
  }
  res.centers = sparse.centers;
  auto vision = numkit::add(sparse.tokens,
                            tape.constant(tokenizer::positional_encoding_3d<T>(
                                sparse.centers, d, cfg.pos_min_wavelength, cfg.pos_max_wavelength)));
  auto text = numkit::add(numkit::embedding(p["text_embed"], ids),
                          tape.constant(tokenizer::positional_encoding_1d<T>(positions, d)));
  auto x = numkit::concat<T>({vision, text}, 0);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string L = layer_prefix(l);
    auto h = numkit::layer_norm(x, p[L + "ln1.g"], p[L + "ln1.b"]);
    const auto ap = p.attn(l, cfg);
    attention::AttentionOutput<T> a;
    if (l < cfg.n_standard || !cfg.magnifier_active()) {
      a = attention::standard_self_attention(h, res.layout, ap, cfg.head_agg);
    } else {
      const auto& prev = res.records.back();
      attention::AttentionLayout layout = res.layout;
      std::vector<selector::SelectionMask> masks;
      std::vector<std::size_t> all;
      for (std::size_t si = 0; si < layout.segments.size(); ++si) {
        const auto row = selector::extract_query_row(prev, query_rows[si]);
        auto m = selector::select(selector::normalize_to_u8(row), cfg, rng);
        if (opt.forced_selection) m.selected = *opt.forced_selection;
        layout.segments[si].selected = m.selected;
        all.insert(all.end(), m.selected.begin(), m.selected.end());
        masks.push_back(std::move(m));
      }
      std::sort(all.begin(), all.end());
      all.erase(std::unique(all.begin(), all.end()), all.end());
      tokenizer::DenseTokenBatch<T> batch;
      {
        numkit::ScopedMacCount c;
        batch = tokenizer::build_dense_tokens(tape, prep, all, p.sa("dense_sa."));
        tok_macs += c.elapsed();
      }
      Var<T> dense;
      if (!batch.empty()) {
        dense = numkit::add(batch.tokens,
                            tape.constant(tokenizer::positional_encoding_3d<T>(
                                batch.centers, d, cfg.pos_min_wavelength, cfg.pos_max_wavelength)));
      }
      a = attention::adaptive_self_attention(h, dense, batch.owner, layout, ap, cfg.head_agg);
      res.selections.push_back(std::move(masks));
    }
    a.record.layer = l;
    res.records.push_back(std::move(a.record));
    x = numkit::add(x, a.out);

    auto h2 = numkit::layer_norm(x, p[L + "ln2.g"], p[L + "ln2.b"]);
    auto f = numkit::gelu(numkit::add_bias(numkit::matmul(h2, p[L + "ffn.w1"]), p[L + "ffn.b1"]));
    x = numkit::add(x, numkit::add_bias(numkit::matmul(f, p[L + "ffn.w2"]), p[L + "ffn.b2"]));
  }
  auto out = numkit::layer_norm(x, p["final_ln.g"], p["final_ln.b"]);
  if (!opt.logit_rows.empty()) out = numkit::gather_rows(out, opt.logit_rows);
  res.logits = numkit::matmul(out, p["lm_head"]);
  res.stats.tokenizer_macs = tok_macs;
  res.stats.transformer_macs = total.elapsed() - tok_macs;
  return res;
}

inline std::size_t argmax_row(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}
inline std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// Greedy decoding of several questions about one scene, packed into one
// sequence per step. Selection is recomputed every step at each segment's
// current last token. An answer ends at `eos` (kept) or after max_len tokens.
// Accumulated over every decoding forward of a generate call.
struct GenerateTrace {
  std::vector<double> selected_frac_sum;  // per magnifier layer, summed over forwards
  std::size_t forwards = 0;
  std::uint64_t transformer_macs = 0;

  double selected_frac(std::size_t layer) const {
    return forwards == 0 ? 0.0 : selected_frac_sum.at(layer) / static_cast<double>(forwards);
  }
};

template <typename T>
std::vector<std::vector<std::size_t>> generate(const ModelParams<T>& params,
                                               tokenizer::ScenePrep& prep,
                                               std::span<const std::vector<std::size_t>> questions,
                                               std::size_t max_len, std::size_t eos,
                                               std::mt19937_64& rng, GenerateTrace* trace = nullptr) {
  std::vector<std::vector<std::size_t>> answers(questions.size());
  std::vector<bool> done(questions.size(), max_len == 0);
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<std::size_t> active;
    std::vector<TextInput> texts;
    for (std::size_t q = 0; q < questions.size(); ++q) {
      if (done[q]) continue;
      selector::SequenceLayout sl{params.cfg.vision_token_num, questions[q], answers[q]};
      texts.push_back(text_input(sl, selector::Phase::kDecoding));
      active.push_back(q);
    }
    if (active.empty()) break;
    ForwardOptions opt;
    std::size_t row = params.cfg.vision_token_num;
    for (const auto& t : texts) {
      row += t.tokens.size();
      opt.logit_rows.push_back(row - 1);
    }
    Tape<T> tape;
    const auto bound = bind(tape, params, false);
    const auto res = forward<T>(tape, bound, params.cfg, prep, texts, rng, opt);
    if (trace) {
      trace->selected_frac_sum.resize(res.selections.size(), 0.0);
      for (std::size_t l = 0; l < res.selections.size(); ++l) {
        double f = 0;
        for (const auto& m : res.selections[l]) f += m.fraction();
        trace->selected_frac_sum[l] += f / static_cast<double>(res.selections[l].size());
      }
      ++trace->forwards;
      trace->transformer_macs += res.stats.transformer_macs;
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t tok = argmax_row(res.logits.value().row(i));
      answers[active[i]].push_back(tok);
      if (tok == eos || answers[active[i]].size() >= max_len) done[active[i]] = true;
    }
  }
  return answers;
}

}  // namespace lscene::model
