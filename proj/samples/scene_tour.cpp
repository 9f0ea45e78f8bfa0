// Generates one cross-room scene, prints its layout and a few benchmark
// questions, then answers them with an untrained model and reports how many
// sparse regions each magnifier layer magnified.
#include <iostream>
#include <random>

#include "lscene/lscene.hpp"

namespace sg = lscene::scenegen;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 7;
  const auto scene = sg::generate_scene(seed, {});
  std::cout << sg::scene_id_for(seed) << ": " << scene.field.size() << " points, "
            << scene.plan_area() << " m2\n";
  for (const auto& room : scene.rooms) {
    std::cout << "  " << sg::room_name(room.type) << " (" << room.area() << " m2):";
    for (std::size_t id : room.objects) {
      std::cout << ' ' << scene.objects[id].color_name() << '-' << scene.objects[id].class_name();
    }
    std::cout << '\n';
  }

  lscene::ModelConfig cfg;
  cfg.vocab_size = sg::vocabulary().size();
  cfg.feature_dim = sg::kFeatureDim;
  const auto params = lscene::model::init_params<float>(cfg, seed);
  lscene::tokenizer::ScenePrep prep(std::make_shared<const lscene::pointcloud::SceneField>(scene.field),
                                    cfg);

  auto qa = sg::generate_qa(scene, seed, {});
  if (qa.size() > 4) qa.resize(4);
  std::vector<std::vector<std::size_t>> questions;
  for (const auto& q : qa) questions.push_back(sg::vocabulary().encode(q.question));
  std::mt19937_64 rng(seed);
  lscene::model::GenerateTrace trace;
  const auto answers = lscene::model::generate(params, prep, questions, 6, sg::kEos, rng, &trace);
  for (std::size_t i = 0; i < qa.size(); ++i) {
    std::cout << "Q: " << qa[i].question << "\n   expected: " << qa[i].answer
              << "\n   untrained model: " << sg::vocabulary().decode(answers[i]) << '\n';
  }
  for (std::size_t l = 0; l < cfg.n_magnifier; ++l) {
    std::cout << "magnifier layer " << cfg.n_standard + l << " selected "
              << 100.0 * trace.selected_frac(l) << "% of sparse regions on average\n";
  }
}
