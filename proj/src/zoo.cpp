#include "taskdb/zoo.hpp"

#include <cmath>

#include "taskdb/rng.hpp"

namespace taskdb {

SyntheticZoo make_synthetic_zoo(const ZooConfig& config) {
  Rng rng(config.seed);
  SyntheticZoo zoo;
  zoo.config = config;

  zoo.W0 = Matrix(config.models, config.rank);
  zoo.H0 = Matrix(config.tasks, config.rank);
  for (double& v : zoo.W0.values()) v = rng.uniform_pos();
  for (double& v : zoo.H0.values()) v = rng.uniform_pos();

  zoo.V.values = zoo.W0.multiply_transposed(zoo.H0);  // M x N
  for (std::size_t i = 0; i < config.models; ++i)
    zoo.V.model_ids.push_back(i + 1);
  for (std::size_t j = 0; j < config.tasks; ++j)
    zoo.V.task_ids.push_back("task" + std::to_string(j + 1));

  zoo.feature_map = Matrix(config.feature_dim, config.rank);
  for (double& v : zoo.feature_map.values()) v = rng.uniform_pos();

  for (std::size_t j = 0; j < config.tasks; ++j) {
    TaskFeatures f;
    f.extractor_id = "zoo";
    f.vector.resize(config.feature_dim, 0.0);
    for (std::size_t d = 0; d < config.feature_dim; ++d) {
      double acc = 0.0;
      for (std::size_t p = 0; p < config.rank; ++p)
        acc += zoo.feature_map.at(d, p) * zoo.H0.at(j, p);
      f.vector[d] = acc;
    }
    zoo.features.push_back(std::move(f));
  }
  return zoo;
}

TaskFeatures SyntheticZoo::noisy_copy(std::size_t task_index, double noise_fraction,
                                      std::uint64_t noise_seed) const {
  const TaskFeatures& base = features.at(task_index);
  double norm = 0.0;
  for (double v : base.vector) norm += v * v;
  norm = std::sqrt(norm);
  Rng rng(noise_seed);
  TaskFeatures out = base;
  double scale = noise_fraction * norm / std::sqrt(double(base.vector.size()));
  for (double& v : out.vector) v += scale * rng.gaussian();
  return out;
}

std::vector<StubModel> register_zoo_models(ModelRepo& repo, const SyntheticZoo& zoo,
                                           std::size_t input_dim) {
  std::vector<StubModel> stubs;
  const ModelProfile profiles[3] = {series_model_profile(), text_model_profile(),
                                    image_model_profile()};
  Rng rng(zoo.config.seed ^ 0x5a17);
  for (std::size_t i = 0; i < zoo.config.models; ++i) {
    const ModelProfile& profile = profiles[i % 3];
    double scale = 0.5 + rng.uniform01();
    StubModel stub = StubModel::scaler(0, profile, input_dim, scale);
    BaseDescriptor arch =
        StubModel::architecture("zoo-affine-" + std::to_string(input_dim),
                                stub.layers());
    auto payload = stub.serialize(arch);
    std::uint64_t id = repo.register_blob_model(
        "zoo-model-" + std::to_string(i + 1), "1.0", payload, profile);
    stubs.push_back(StubModel::scaler(id, profile, input_dim, scale));
  }
  return stubs;
}

}  // namespace taskdb
