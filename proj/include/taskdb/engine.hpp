#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taskdb/executor.hpp"
#include "taskdb/model_repo.hpp"
#include "taskdb/planner.hpp"
#include "taskdb/selection.hpp"
#include "taskdb/table.hpp"

namespace taskdb {

/// Flat key/value engine configuration. File keys use dots for device
/// fields (cpu.flops, gpu.latency, ...); environment variables prefixed
/// TASKDB_ override file values (dots become underscores).
struct EngineConfig {
  std::filesystem::path data_dir = "data";
  std::vector<DeviceProfile> devices;  // defaults: cpu0, gpu0, remote0
  std::size_t default_k = 8;           // capped at min(M, N) when training
  std::vector<std::uint64_t> batch_candidates = {1, 4, 8, 16, 32, 64, 128};
  std::size_t cache_capacity = 4096;
  std::uint64_t mem_budget = std::uint64_t(1) << 30;
  bool realtime = false;
  std::uint64_t seed = 42;
  double rel_row_cost = 1e-7;
  double filter_selectivity = 0.5;
  std::size_t queue_capacity = 4;
  std::size_t stream_chunk = 1024;
  std::size_t extractor_dim = 32;
  double extractor_cost = 5e-5;

  EngineConfig();

  static EngineConfig load(const std::optional<std::filesystem::path>& file);
  void apply_kv(const std::string& key, const std::string& value);
};

struct QueryOptions {
  bool explain_only = false;
  bool pipeline = false;
  std::optional<std::uint64_t> batch_size;
  bool use_cache = true;
};

struct QueryResult {
  RowBatch rows;
  RunMetrics metrics;
  std::string plan_text;

  std::string format_rows(const std::string& format) const;  // table|csv|jsonlike
};

struct TrainSummary {
  std::size_t k = 0;
  std::size_t iterations = 0;
  double final_error = 0.0;
  std::size_t models = 0;
  std::size_t tasks = 0;
};

/// Operator-facing facade wiring the catalog, selector, planner, and
/// executor together over one data directory.
class Engine {
 public:
  explicit Engine(EngineConfig config);

  EngineConfig& config() { return config_; }
  ModelRepo& repo() { return repo_; }
  TaskRegistry& tasks() { return tasks_; }
  TableCatalog& tables() { return tables_; }
  EmbeddingCache& cache() { return cache_; }
  Extractor& extractor() { return *extractor_; }

  /// Factorizes the transfer matrix and persists the selector bundle
  /// (W/H/features/meta) under <data_dir>/selector.
  TrainSummary train_selector(const TransferMatrix& V,
                              const std::vector<TaskFeatures>& features,
                              std::optional<std::size_t> k, std::size_t max_iters,
                              double tol);
  TrainSummary train_selector_files(const std::filesystem::path& matrix_csv,
                                    const std::filesystem::path& features_dir,
                                    std::optional<std::size_t> k,
                                    std::size_t max_iters, double tol);

  bool has_selector() const;
  const SelectorBundle& selector() const;

  /// Ranked transfer scores for a new task's features.
  std::vector<std::pair<std::uint64_t, double>> rank_models(
      const TaskFeatures& features) const;

  TaskBinding create_task(const TaskSpec& spec, const TaskFeatures* features,
                          std::optional<std::uint64_t> override_model);

  /// Parse + bind + plan: returns the physical plan and execution order.
  std::pair<PlanDag, std::vector<std::uint32_t>> plan_query(
      const std::string& sql, const QueryOptions& options = {});

  QueryResult query(const std::string& sql, const QueryOptions& options = {});

  /// Loads a feature vector file (single rank-1 Mvec frame).
  static TaskFeatures load_features_file(const std::filesystem::path& path,
                                         const std::string& extractor_id);

 private:
  ExecEnv make_env(const QueryOptions& options);

  EngineConfig config_;
  ModelRepo repo_;
  TaskRegistry tasks_;
  TableCatalog tables_;
  EmbeddingCache cache_;
  std::unique_ptr<Extractor> extractor_;
  std::map<std::uint64_t, StubModel> stub_cache_;
  std::map<std::uint64_t, std::shared_ptr<RemoteClient>> remote_clients_;
  mutable std::optional<SelectorBundle> selector_;
};

}  // namespace taskdb
