#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lscene/config.hpp"
#include "lscene/model.hpp"
#include "lscene/scenegen.hpp"

namespace lscene::harness {

using nlohmann::json;

// Where the benchmark comes from: a dataset directory, or (path empty) a
// benchmark generated in memory from `benchmark`, whose seed is offset by the
// run seed.
struct DataSpec {
  std::string path;
  scenegen::BenchmarkConfig benchmark;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataSpec, path, benchmark)

// One ablation cell: a name and a partial ModelConfig merged over the base.
struct Cell {
  std::string name;
  json model = json::object();
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Cell, name, model)

// Either explicit cells or an axis (a ModelConfig field) plus values; an
// axis expands to one cell per value named "<axis>=<value>".
struct AblationSpec {
  std::string axis;
  json values = json::array();
  std::vector<Cell> cells;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AblationSpec, axis, values, cells)

struct EvalSpec {
  std::size_t max_len = 8;
  std::size_t max_questions_per_scene = 0;  // 0 = all
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalSpec, max_len, max_questions_per_scene)

struct ExperimentSpec {
  ModelConfig model;
  model::TrainConfig train;
  DataSpec data;
  std::vector<scenegen::Task> tasks{scenegen::Task::kAttribute, scenegen::Task::kNearest};
  EvalSpec eval;
  AblationSpec ablation;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs/experiment";
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentSpec, model, train, data, tasks, eval,
                                                ablation, seeds, output_dir)

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("load_spec: cannot open " + path.string());
  return json::parse(is, nullptr, true, true).get<ExperimentSpec>();
}

inline std::vector<Cell> expand_cells(const AblationSpec& a) {
  std::vector<Cell> cells = a.cells;
  if (!a.axis.empty()) {
    for (const auto& v : a.values) {
      const std::string label = v.is_string() ? v.get<std::string>() : v.dump();
      cells.push_back({a.axis + "=" + label, json{{a.axis, v}}});
    }
  }
  if (cells.empty()) cells.push_back({"base", json::object()});
  return cells;
}

// Base config with the cell patch applied; vocab and feature width filled in
// from the generator when left at 0.
inline ModelConfig cell_config(const ModelConfig& base, const Cell& cell) {
  json j = base;
  for (const auto& [k, v] : cell.model.items()) {
    if (!j.contains(k)) throw ConfigError("cell '" + cell.name + "': unknown model field '" + k + "'");
    j[k] = v;
  }
  ModelConfig c = j.get<ModelConfig>();
  if (c.vocab_size == 0) c.vocab_size = scenegen::vocabulary().size();
  if (c.feature_dim == 0) c.feature_dim = scenegen::kFeatureDim;
  c.validate();
  return c;
}

// Fields of `a` and `b` that differ, as {field: [a, b]}.
inline json config_diff(const ModelConfig& a, const ModelConfig& b) {
  const json ja = a, jb = b;
  json d = json::object();
  for (const auto& [k, v] : ja.items()) {
    if (jb.at(k) != v) d[k] = {v, jb.at(k)};
  }
  return d;
}

struct Benchmark {
  std::vector<std::string> train_ids, test_ids;
  std::map<std::string, std::shared_ptr<const pointcloud::SceneField>> fields;
  std::map<std::string, std::vector<scenegen::QASample>> qa;
};

inline Benchmark generate_benchmark(const scenegen::BenchmarkConfig& bc) {
  Benchmark b;
  const std::size_t stride =
      bc.test_fraction > 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / bc.test_fraction)))
                           : 0;
  for (std::size_t i = 0; i < bc.n_scenes; ++i) {
    const std::uint64_t s = scenegen::scene_seed(bc.seed, i);
    auto scene = scenegen::generate_scene(s, bc.scene);
    auto samples = scenegen::generate_qa(scene, s, bc.scene);
    if (bc.planning_caption) {
      auto pc = scenegen::generate_planning_caption(scene);
      samples.insert(samples.end(), pc.begin(), pc.end());
    }
    const std::string id = scene.field.scene_id;
    b.qa[id] = std::move(samples);
    b.fields[id] = std::make_shared<const pointcloud::SceneField>(std::move(scene.field));
    (stride > 0 && i % stride == stride - 1 ? b.test_ids : b.train_ids).push_back(id);
  }
  return b;
}

inline Benchmark load_benchmark(const std::filesystem::path& root) {
  const auto d = scenegen::read_dataset(root);
  Benchmark b;
  b.train_ids = d.train_ids;
  b.test_ids = d.test_ids;
  b.qa = d.qa;
  for (const auto* ids : {&d.train_ids, &d.test_ids}) {
    for (const auto& id : *ids) {
      b.fields[id] = std::make_shared<const pointcloud::SceneField>(d.load_field(id));
    }
  }
  return b;
}

inline Benchmark benchmark_for(const DataSpec& data, std::uint64_t run_seed) {
  if (!data.path.empty()) return load_benchmark(data.path);
  auto bc = data.benchmark;
  bc.seed += run_seed;
  return generate_benchmark(bc);
}

inline bool wanted(const std::vector<scenegen::Task>& tasks, scenegen::Task t) {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

// Training examples over the train scenes; one ScenePrep per scene.
inline model::TrainSet make_train_set(const Benchmark& b, const ModelConfig& cfg,
                                      const std::vector<scenegen::Task>& tasks) {
  const auto& vocab = scenegen::vocabulary();
  model::TrainSet set;
  for (const auto& id : b.train_ids) {
    const std::size_t scene = set.scenes.size();
    set.scenes.push_back(std::make_shared<tokenizer::ScenePrep>(b.fields.at(id), cfg));
    for (const auto& q : b.qa.at(id)) {
      if (!wanted(tasks, q.task)) continue;
      set.examples.push_back({scene, vocab.encode(q.question), vocab.encode(q.answer)});
    }
  }
  return set;
}

struct EvalReport {
  std::size_t questions = 0, correct = 0;
  std::size_t small_questions = 0, small_correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_task;  // correct, total
  std::vector<double> selected_frac;  // per magnifier layer, mean over decoding forwards
  double transformer_macs_per_forward = 0;

  double accuracy() const { return questions ? static_cast<double>(correct) / questions : 0.0; }
  double small_accuracy() const {
    return small_questions ? static_cast<double>(small_correct) / small_questions : 0.0;
  }
};

inline void to_json(json& j, const EvalReport& r) {
  json tasks = json::object();
  for (const auto& [k, v] : r.per_task) {
    tasks[k] = {{"correct", v.first},
                {"total", v.second},
                {"accuracy", v.second ? static_cast<double>(v.first) / v.second : 0.0}};
  }
  j = {{"questions", r.questions},
       {"exact_match", r.accuracy()},
       {"small_questions", r.small_questions},
       {"small_exact_match", r.small_accuracy()},
       {"per_task", tasks},
       {"selected_frac", r.selected_frac},
       {"transformer_macs_per_forward", r.transformer_macs_per_forward}};
}

// Greedy exact-match accuracy (answer tokens including the end token) over
// the test scenes; each scene's questions are decoded packed together.
template <typename T>
EvalReport evaluate(const model::ModelParams<T>& params, const Benchmark& b,
                    const std::vector<scenegen::Task>& tasks, const EvalSpec& es,
                    std::uint64_t seed) {
  const auto& vocab = scenegen::vocabulary();
  EvalReport r;
  model::GenerateTrace trace;
  std::mt19937_64 rng(seed);
  for (const auto& id : b.test_ids) {
    std::vector<const scenegen::QASample*> qs;
    for (const auto& q : b.qa.at(id)) {
      if (wanted(tasks, q.task)) qs.push_back(&q);
      if (es.max_questions_per_scene > 0 && qs.size() == es.max_questions_per_scene) break;
    }
    if (qs.empty()) continue;
    tokenizer::ScenePrep prep(b.fields.at(id), params.cfg);
    std::vector<std::vector<std::size_t>> questions;
    for (const auto* q : qs) questions.push_back(vocab.encode(q->question));
    const auto answers = model::generate(params, prep, questions, es.max_len, scenegen::kEos, rng, &trace);
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const bool ok = answers[i] == vocab.encode(qs[i]->answer);
      const std::string task = json(qs[i]->task).get<std::string>();
      ++r.questions;
      r.correct += ok;
      ++r.per_task[task].second;
      r.per_task[task].first += ok;
      if (qs[i]->split == scenegen::Split::kSmall) {
        ++r.small_questions;
        r.small_correct += ok;
      }
    }
  }
  for (std::size_t l = 0; l < trace.selected_frac_sum.size(); ++l) r.selected_frac.push_back(trace.selected_frac(l));
  if (trace.forwards > 0) {
    r.transformer_macs_per_forward =
        static_cast<double>(trace.transformer_macs) / static_cast<double>(trace.forwards);
  }
  return r;
}

struct CellResult {
  std::string cell;
  std::uint64_t seed = 0;
  json config_diff = json::object();
  std::optional<EvalReport> eval;
  double final_loss = 0;
  std::size_t steps = 0;
  double train_seconds = 0;
  std::string error;
};

inline void to_json(json& j, const CellResult& c) {
  j = {{"cell", c.cell},           {"seed", c.seed},   {"config_diff", c.config_diff},
       {"final_loss", c.final_loss}, {"steps", c.steps}, {"train_seconds", c.train_seconds}};
  j["eval"] = c.eval ? json(*c.eval) : json(nullptr);
  if (!c.error.empty()) j["error"] = c.error;
}

// Trains and evaluates one model. Model init and batch order are offset by
// the run seed. Writes <dir>/metrics.jsonl and, when `checkpoint` is set,
// <dir>/model.lsck.
inline CellResult run_cell(const ExperimentSpec& spec, const Cell& cell, const Benchmark& bench,
                           std::uint64_t run_seed, const std::filesystem::path& dir,
                           bool checkpoint = false) {
  CellResult out;
  out.cell = cell.name;
  out.seed = run_seed;
  try {
    ModelConfig cfg = cell_config(spec.model, cell);
    out.config_diff = config_diff(cell_config(spec.model, {"base", json::object()}), cfg);
    cfg.seed = spec.model.seed + run_seed;
    model::TrainConfig tc = spec.train;
    tc.seed = spec.train.seed + run_seed;
    std::filesystem::create_directories(dir);
    std::ofstream log(dir / "metrics.jsonl");
    const auto start = std::chrono::steady_clock::now();
    auto params = model::init_params<float>(cfg, cfg.seed);
    const auto set = make_train_set(bench, cfg, spec.tasks);
    const auto curve = model::train(params, set, tc, [&](const model::StepMetrics& m) {
      log << json(m).dump() << '\n';
    });
    out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.steps = curve.size();
    out.final_loss = curve.empty() ? 0.0 : curve.back().loss;
    if (checkpoint) {
      model::save_checkpoint(params, dir / "model.lsck",
                             {{"cell", cell.name}, {"seed", run_seed}, {"train", tc}});
    }
    out.eval = evaluate(params, bench, spec.tasks, spec.eval, tc.seed);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

struct CellSummary {
  std::string cell;
  std::size_t runs = 0, failed = 0;
  double exact_match = 0, small_exact_match = 0;
  std::vector<double> selected_frac;
  double transformer_macs_per_forward = 0;
};

inline void to_json(json& j, const CellSummary& s) {
  j = {{"cell", s.cell},
       {"runs", s.runs},
       {"failed", s.failed},
       {"exact_match", s.exact_match},
       {"small_exact_match", s.small_exact_match},
       {"selected_frac", s.selected_frac},
       {"transformer_macs_per_forward", s.transformer_macs_per_forward}};
}

struct MetricReport {
  std::vector<CellResult> runs;
  std::vector<CellSummary> cells;  // means over the successful seeds, in cell order

  const CellSummary& cell(const std::string& name) const {
    for (const auto& c : cells) {
      if (c.cell == name) return c;
    }
    throw std::out_of_range("MetricReport: no cell '" + name + "'");
  }
};

inline void to_json(json& j, const MetricReport& r) { j = {{"cells", r.cells}, {"runs", r.runs}}; }

inline std::vector<CellSummary> summarize(const std::vector<Cell>& cells,
                                          const std::vector<CellResult>& runs) {
  std::vector<CellSummary> out;
  for (const auto& cell : cells) {
    CellSummary s;
    s.cell = cell.name;
    for (const auto& r : runs) {
      if (r.cell != cell.name) continue;
      if (!r.eval) {
        ++s.failed;
        continue;
      }
      ++s.runs;
      s.exact_match += r.eval->accuracy();
      s.small_exact_match += r.eval->small_accuracy();
      s.transformer_macs_per_forward += r.eval->transformer_macs_per_forward;
      s.selected_frac.resize(r.eval->selected_frac.size(), 0.0);
      for (std::size_t l = 0; l < r.eval->selected_frac.size(); ++l) s.selected_frac[l] += r.eval->selected_frac[l];
    }
    if (s.runs > 0) {
      const double n = static_cast<double>(s.runs);
      s.exact_match /= n;
      s.small_exact_match /= n;
      s.transformer_macs_per_forward /= n;
      for (double& f : s.selected_frac) f /= n;
    }
    out.push_back(s);
  }
  return out;
}

inline void write_report(const MetricReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << json(r).dump(2) << '\n';
  std::ofstream csv(dir / "report.csv");
  csv << "cell,seed,exact_match,small_exact_match,questions,small_questions,final_loss,steps,"
         "train_seconds,error\n";
  for (const auto& run : r.runs) {
    csv << run.cell << ',' << run.seed << ',';
    if (run.eval) {
      csv << run.eval->accuracy() << ',' << run.eval->small_accuracy() << ',' << run.eval->questions
          << ',' << run.eval->small_questions;
    } else {
      csv << ",,,";
    }
    std::string err = run.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    csv << ',' << run.final_loss << ',' << run.steps << ',' << run.train_seconds << ',' << err << '\n';
  }
}

using ProgressSink = std::function<void(const CellResult&)>;

// Every cell x seed, sequentially in-process. Cells sharing a seed share the
// benchmark and seed schedule. A failing cell is recorded and the rest proceed.
inline MetricReport run_ablation(const ExperimentSpec& spec, const ProgressSink& progress = {}) {
  const auto cells = expand_cells(spec.ablation);
  MetricReport report;
  const std::filesystem::path root = spec.output_dir;
  for (std::uint64_t seed : spec.seeds) {
    const Benchmark bench = benchmark_for(spec.data, seed);
    for (const auto& cell : cells) {
      report.runs.push_back(
          run_cell(spec, cell, bench, seed, root / cell.name / ("seed" + std::to_string(seed))));
      if (progress) progress(report.runs.back());
    }
  }
  report.cells = summarize(cells, report.runs);
  write_report(report, root);
  return report;
}

}  // namespace lscene::harness
