#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "taskdb/backends.hpp"
#include "taskdb/selection.hpp"

namespace taskdb {

/// Parameters for a seeded synthetic model zoo: M models, N historical tasks,
/// a rank-k ground-truth transfer structure, and feature vectors correlated
/// with the task embeddings so a locality-based regressor can generalize.
struct ZooConfig {
  std::size_t models = 20;
  std::size_t tasks = 15;
  std::size_t rank = 3;
  std::size_t feature_dim = 32;
  std::uint64_t seed = 1;
};

struct SyntheticZoo {
  ZooConfig config;
  TransferMatrix V;              // V = W0 * H0^T, exactly rank-k
  Matrix W0;                     // ground-truth model factors, M x k
  Matrix H0;                     // ground-truth task factors, N x k
  Matrix feature_map;            // feature_dim x k projection
  std::vector<TaskFeatures> features;  // per historical task

  /// Features of the j-th historical task perturbed by gaussian noise with
  /// std = noise_fraction * ||features||.
  TaskFeatures noisy_copy(std::size_t task_index, double noise_fraction,
                          std::uint64_t noise_seed) const;
};

SyntheticZoo make_synthetic_zoo(const ZooConfig& config);

/// Registers M runnable stub models matching the zoo ids, cycling through
/// the series / text / image archetype profiles. Returns the stub kernels
/// keyed by zoo model id (ids are 1-based row order).
std::vector<StubModel> register_zoo_models(ModelRepo& repo, const SyntheticZoo& zoo,
                                           std::size_t input_dim);

}  // namespace taskdb
