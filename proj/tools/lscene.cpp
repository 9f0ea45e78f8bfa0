#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lscene/harness.hpp"

namespace hn = lscene::harness;
namespace sg = lscene::scenegen;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

hn::ExperimentSpec spec_or_default(const std::string& path, std::optional<std::uint64_t> seed) {
  hn::ExperimentSpec spec = path.empty() ? hn::ExperimentSpec{} : hn::load_spec(path);
  if (seed) spec.seeds = {*seed};
  return spec;
}

const hn::Cell& find_cell(const std::vector<hn::Cell>& cells, const std::string& name) {
  if (name.empty()) return cells.front();
  for (const auto& c : cells) {
    if (c.name == name) return c;
  }
  throw lscene::ConfigError("no ablation cell named '" + name + "'");
}

void print_summary(const hn::MetricReport& r) {
  std::cout << std::left << std::setw(32) << "cell" << std::setw(8) << "runs" << std::setw(14)
            << "exact_match" << std::setw(14) << "small_match" << "selected_frac\n";
  for (const auto& c : r.cells) {
    std::cout << std::setw(32) << c.cell << std::setw(8) << c.runs << std::setw(14) << c.exact_match
              << std::setw(14) << c.small_exact_match << json(c.selected_frac).dump() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene magnifier toolkit: data generation, training, evaluation and probes"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Run seed; overrides the spec's seed list");

  std::string spec_path, out_dir, cell_name, checkpoint;

  auto* gen = app.add_subcommand("gen-data", "Generate a benchmark dataset directory");
  gen->add_option("spec", spec_path, "Experiment spec (its data.benchmark section is used)");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one cell of a spec and write a checkpoint");
  train->add_option("spec", spec_path, "Experiment spec")->required();
  train->add_option("--cell", cell_name, "Ablation cell to train (default: the first)");

  auto* eval = app.add_subcommand("eval", "Exact-match accuracy of a checkpoint on the test split");
  eval->add_option("spec", spec_path, "Experiment spec (data and tasks)")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  auto* ablate = app.add_subcommand("ablate", "Run every ablation cell for every seed");
  ablate->add_option("spec", spec_path, "Experiment spec")->required();

  auto* probe = app.add_subcommand("probe-flops", "Transformer MAC counts across scene sizes");
  std::vector<std::size_t> sizes{10000, 40000, 160000};
  probe->add_option("spec", spec_path, "Experiment spec (model section is used)");
  probe->add_option("--sizes", sizes, "Scene point counts")->delimiter(',');
  double select_frac = 0.15;
  probe->add_option("--select-frac", select_frac, "Pinned fraction of selected regions");

  auto* exp = app.add_subcommand("export-attn", "Write attention heatmaps and selection overlays");
  std::string data_dir, scene_id, question;
  exp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  exp->add_option("--data", data_dir, "Dataset directory")->required();
  exp->add_option("--scene", scene_id, "Scene id")->required();
  exp->add_option("--question", question, "Question text in vocabulary words")->required();
  exp->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto spec = spec_or_default(spec_path, std::nullopt);
      if (seed) spec.data.benchmark.seed = *seed;
      const auto stats = sg::write_benchmark(out_dir, spec.data.benchmark);
      std::cout << json(stats).dump(2) << '\n';
    } else if (train->parsed()) {
      const auto spec = spec_or_default(spec_path, seed);
      const auto cells = hn::expand_cells(spec.ablation);
      const auto& cell = find_cell(cells, cell_name);
      const std::uint64_t s = spec.seeds.front();
      const auto bench = hn::benchmark_for(spec.data, s);
      const fs::path dir = fs::path(spec.output_dir) / cell.name / ("seed" + std::to_string(s));
      const auto r = hn::run_cell(spec, cell, bench, s, dir, true);
      std::cout << json(r).dump(2) << '\n';
      if (!r.error.empty()) return 1;
      std::cout << "checkpoint: " << (dir / "model.lsck").string() << '\n';
    } else if (eval->parsed()) {
      const auto spec = spec_or_default(spec_path, seed);
      const auto params = lscene::model::load_checkpoint<float>(checkpoint);
      const auto bench = hn::benchmark_for(spec.data, spec.seeds.front());
      const auto r = hn::evaluate(params, bench, spec.tasks, spec.eval, spec.seeds.front());
      std::cout << json(r).dump(2) << '\n';
    } else if (ablate->parsed()) {
      const auto spec = spec_or_default(spec_path, seed);
      const auto r = hn::run_ablation(spec, [](const hn::CellResult& c) {
        std::cerr << "[ablate] " << c.cell << " seed " << c.seed
                  << (c.error.empty() ? "" : " FAILED: " + c.error) << '\n';
      });
      print_summary(r);
      std::cout << "report: " << (fs::path(spec.output_dir) / "report.json").string() << '\n';
    } else if (probe->parsed()) {
      const auto spec = spec_or_default(spec_path, seed);
      const auto r = hn::complexity_probe(spec.model, sizes, seed.value_or(0), select_frac);
      std::cout << json(r).dump(2) << '\n';
      if (!r.constant_across_sizes()) return 1;
    } else if (exp->parsed()) {
      const auto params = lscene::model::load_checkpoint<float>(checkpoint);
      const auto d = sg::read_dataset(data_dir);
      auto field = std::make_shared<const lscene::pointcloud::SceneField>(d.load_field(scene_id));
      const auto layers = hn::export_attention(params, field, sg::vocabulary().encode(question),
                                               out_dir, seed.value_or(0));
      for (const auto& l : layers) {
        std::cout << "layer " << l.layer << ": " << l.pgm.string() << ", " << l.overlay.string()
                  << " (" << l.mask.selected.size() << " regions selected)\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
