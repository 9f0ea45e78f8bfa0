#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lscene/model/forward.hpp"

namespace lscene::model {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 3e-4;
  double lr_min = 3e-5;
  std::size_t warmup = 20;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  std::size_t questions_per_scene = 8;
  std::size_t scenes_per_step = 1;
  std::size_t workers = 1;
  double target_loss = 0.0;  // stop once a step's loss falls below; 0 disables
  std::size_t log_every = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, steps, lr, lr_min, warmup,
                                                weight_decay, beta1, beta2, eps, grad_clip,
                                                questions_per_scene, scenes_per_step, workers,
                                                target_loss, log_every, seed)

struct TrainExample {
  std::size_t scene = 0;
  std::vector<std::size_t> instruction;
  std::vector<std::size_t> answer;  // ends with the end token
};

struct TrainSet {
  std::vector<std::shared_ptr<tokenizer::ScenePrep>> scenes;
  std::vector<TrainExample> examples;
};

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0;
  double lr = 0;
  double selected_frac_mean = 0;
};

inline void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = {{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"selected_frac_mean", m.selected_frac_mean}};
}

// Linear warmup, then cosine from lr to lr_min over the remaining steps.
inline double learning_rate(const TrainConfig& tc, std::size_t step) {
  if (tc.warmup > 0 && step < tc.warmup) {
    return tc.lr * static_cast<double>(step + 1) / static_cast<double>(tc.warmup);
  }
  const std::size_t span = tc.steps > tc.warmup ? tc.steps - tc.warmup : 1;
  const double t = std::min(1.0, static_cast<double>(step - std::min(step, tc.warmup)) /
                                     static_cast<double>(span));
  return tc.lr_min + 0.5 * (tc.lr - tc.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

// AdamW with decoupled decay on every parameter with more than one row.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const ModelParams<T>& p) {
    for (const auto& [k, t] : p.tensors) {
      m_.emplace(k, std::vector<double>(t.size(), 0.0));
      v_.emplace(k, std::vector<double>(t.size(), 0.0));
    }
  }

  void step(ModelParams<T>& p, const std::map<std::string, std::vector<double>>& grads,
            const TrainConfig& tc, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t_));
    for (auto& [k, tensor] : p.tensors) {
      const auto& g = grads.at(k);
      auto& m = m_.at(k);
      auto& v = v_.at(k);
      const double wd = tensor.rows() > 1 ? tc.weight_decay : 0.0;
      auto data = tensor.data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        m[i] = tc.beta1 * m[i] + (1 - tc.beta1) * g[i];
        v[i] = tc.beta2 * v[i] + (1 - tc.beta2) * g[i] * g[i];
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + tc.eps) + wd * data[i];
        data[i] = static_cast<T>(data[i] - lr * update);
      }
    }
  }

 private:
  std::map<std::string, std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Questions of one scene trained together in one packed forward.
struct Batch {
  std::size_t scene = 0;
  std::vector<std::size_t> examples;
};

// Every scene's examples, shuffled and chunked; chunk order shuffled.
inline std::vector<Batch> epoch_batches(const TrainSet& set, std::size_t per_scene,
                                        std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> by_scene(set.scenes.size());
  for (std::size_t i = 0; i < set.examples.size(); ++i) by_scene.at(set.examples[i].scene).push_back(i);
  std::vector<Batch> out;
  for (std::size_t s = 0; s < by_scene.size(); ++s) {
    auto& ex = by_scene[s];
    std::shuffle(ex.begin(), ex.end(), rng);
    for (std::size_t b = 0; b < ex.size(); b += per_scene) {
      out.push_back({s, {ex.begin() + static_cast<std::ptrdiff_t>(b),
                         ex.begin() + static_cast<std::ptrdiff_t>(std::min(ex.size(), b + per_scene))}});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

struct ShardResult {
  double loss_sum = 0;  // summed token cross-entropy
  std::size_t tokens = 0;
  double selected_frac = 0;
  std::map<std::string, std::vector<double>> grads;  // of loss_sum / step_tokens
};

// Packed forward/backward of one batch. Loss is answer-span cross-entropy;
// gradients are scaled by 1 / step_tokens so shard sums give the step mean.
template <typename T>
ShardResult run_shard(const ModelParams<T>& params, const TrainSet& set, const Batch& batch,
                      std::size_t step_tokens, std::uint64_t rng_seed) {
  std::vector<TextInput> texts;
  std::vector<std::size_t> rows, targets;
  std::size_t cursor = params.cfg.vision_token_num;
  for (std::size_t e : batch.examples) {
    const auto& ex = set.examples[e];
    selector::SequenceLayout sl{params.cfg.vision_token_num, ex.instruction, ex.answer};
    texts.push_back(text_input(sl, selector::Phase::kTraining));
    // Row of instruction token L_i - 1 + j predicts answer token j.
    for (std::size_t j = 0; j < ex.answer.size(); ++j) {
      rows.push_back(cursor + ex.instruction.size() - 1 + j);
      targets.push_back(ex.answer[j]);
    }
    cursor += ex.instruction.size() + ex.answer.size();
  }
  std::mt19937_64 rng(rng_seed);
  Tape<T> tape;
  const auto bound = bind(tape, params, true);
  ForwardOptions opt;
  opt.logit_rows = rows;
  auto res = forward<T>(tape, bound, params.cfg, *set.scenes.at(batch.scene), texts, rng, opt);
  auto ce = numkit::cross_entropy(res.logits, targets);
  const T scale_to_step = static_cast<T>(static_cast<double>(targets.size()) /
                                         static_cast<double>(step_tokens));
  auto loss = numkit::scale(ce, scale_to_step);
  tape.backward(loss);

  ShardResult out;
  out.tokens = targets.size();
  out.loss_sum = static_cast<double>(ce.value().item()) * static_cast<double>(targets.size());
  out.selected_frac = res.selected_fraction_mean();
  for (const auto& [k, v] : bound.vars) {
    const auto g = tape.grad(v);
    out.grads.emplace(k, std::vector<double>(g.data().begin(), g.data().end()));
  }
  return out;
}

using MetricsSink = std::function<void(const StepMetrics&)>;

// Trains in place. Deterministic given (params, set, tc): shards are summed in
// batch order whatever the worker count. Throws TrainingError with the step
// index on a non-finite loss.
template <typename T>
std::vector<StepMetrics> train(ModelParams<T>& params, const TrainSet& set, const TrainConfig& tc,
                               const MetricsSink& sink = {}) {
  if (set.examples.empty()) throw TrainingError("train: empty training set");
  if (tc.questions_per_scene == 0 || tc.scenes_per_step == 0) {
    throw ConfigError("train: questions_per_scene and scenes_per_step must be positive");
  }
  AdamW<T> opt(params);
  std::mt19937_64 order_rng(tc.seed);
  std::vector<Batch> queue;
  std::size_t cursor = 0;
  std::vector<StepMetrics> log;
  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<Batch> batches;
    while (batches.size() < tc.scenes_per_step) {
      if (cursor == queue.size()) {
        queue = epoch_batches(set, tc.questions_per_scene, order_rng);
        cursor = 0;
      }
      batches.push_back(queue[cursor++]);
    }
    std::size_t step_tokens = 0;
    for (const auto& b : batches) {
      for (std::size_t e : b.examples) step_tokens += set.examples[e].answer.size();
    }
    std::vector<ShardResult> shards(batches.size());
    auto work = [&](std::size_t i) {
      const std::uint64_t seed = tc.seed * 0x9E3779B97F4A7C15ULL + step * 1315423911ULL + i;
      shards[i] = run_shard(params, set, batches[i], step_tokens, seed);
    };
    try {
      if (tc.workers <= 1 || batches.size() == 1) {
        for (std::size_t i = 0; i < batches.size(); ++i) work(i);
      } else {
        std::vector<std::exception_ptr> errors(batches.size());
        for (std::size_t start = 0; start < batches.size(); start += tc.workers) {
          std::vector<std::thread> pool;
          for (std::size_t i = start; i < std::min(batches.size(), start + tc.workers); ++i) {
            pool.emplace_back([&, i] {
              try {
                work(i);
              } catch (...) {
                errors[i] = std::current_exception();
              }
            });
          }
          for (auto& th : pool) th.join();
        }
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }
    } catch (const numkit::NonFiniteError& e) {
      throw TrainingError("train: non-finite value at step " + std::to_string(step) + ": " + e.what());
    }

    std::map<std::string, std::vector<double>> grads = std::move(shards[0].grads);
    double loss_sum = shards[0].loss_sum, frac = shards[0].selected_frac;
    for (std::size_t i = 1; i < shards.size(); ++i) {
      for (auto& [k, g] : grads) {
        const auto& add = shards[i].grads.at(k);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += add[j];
      }
      loss_sum += shards[i].loss_sum;
      frac += shards[i].selected_frac;
    }
    const double loss = loss_sum / static_cast<double>(step_tokens);
    if (!std::isfinite(loss)) {
      throw TrainingError("train: non-finite loss at step " + std::to_string(step));
    }
    if (tc.grad_clip > 0) {
      double norm2 = 0;
      for (const auto& [_, g] : grads) {
        for (double v : g) norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        throw TrainingError("train: non-finite gradient at step " + std::to_string(step));
      }
      if (norm > tc.grad_clip) {
        const double f = tc.grad_clip / norm;
        for (auto& [_, g] : grads) {
          for (double& v : g) v *= f;
        }
      }
    }
    const double lr = learning_rate(tc, step);
    opt.step(params, grads, tc, lr);
    StepMetrics m{step, loss, lr, frac / static_cast<double>(shards.size())};
    log.push_back(m);
    if (sink && (step % std::max<std::size_t>(1, tc.log_every) == 0 || step + 1 == tc.steps)) sink(m);
    if (tc.target_loss > 0 && loss < tc.target_loss) break;
  }
  return log;
}

}  // namespace lscene::model
