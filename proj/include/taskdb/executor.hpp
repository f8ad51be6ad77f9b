#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "taskdb/backends.hpp"
#include "taskdb/planner.hpp"
#include "taskdb/remote.hpp"
#include "taskdb/table.hpp"

namespace taskdb {

/// Feature extractor turning raw text/image bytes into model-agnostic
/// embedding vectors. Invocations are counted so cache effectiveness is
/// observable.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Simulated seconds charged per invocation.
  virtual double sim_cost() const = 0;

  Mvec extract(std::string_view raw) {
    invocations_.fetch_add(1, std::memory_order_relaxed);
    return compute(raw);
  }
  std::uint64_t invocations() const {
    return invocations_.load(std::memory_order_relaxed);
  }

 protected:
  virtual Mvec compute(std::string_view raw) = 0;

 private:
  std::atomic<std::uint64_t> invocations_{0};
};

/// Deterministic stand-in for a pretrained encoder: expands a content digest
/// into a fixed-length vector in [0, 1).
class HashingExtractor : public Extractor {
 public:
  explicit HashingExtractor(std::size_t dim, double sim_cost = 5e-5)
      : dim_(dim), sim_cost_(sim_cost) {}
  std::string id() const override { return "hash" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }
  double sim_cost() const override { return sim_cost_; }

 protected:
  Mvec compute(std::string_view raw) override;

 private:
  std::size_t dim_;
  double sim_cost_;
};

/// Serves feature vectors recorded ahead of time, keyed by the raw input.
class PrecomputedExtractor : public Extractor {
 public:
  PrecomputedExtractor(std::string id, std::map<std::string, Mvec> features,
                       double sim_cost = 5e-5)
      : id_(std::move(id)), features_(std::move(features)), sim_cost_(sim_cost) {}
  std::string id() const override { return id_; }
  std::size_t dim() const override {
    return features_.empty() ? 0 : features_.begin()->second.size();
  }
  double sim_cost() const override { return sim_cost_; }

 protected:
  Mvec compute(std::string_view raw) override;

 private:
  std::string id_;
  std::map<std::string, Mvec> features_;
  double sim_cost_;
};

/// Shared store of pre-computed embeddings keyed by (extractor id, content
/// digest). LRU-bounded; safe for concurrent readers and writers.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<Mvec> get(const std::string& key);
  void put(const std::string& key, Mvec value);

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  void reset_counters();

 private:
  struct Entry {
    std::string key;
    Mvec value;
  };

  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

/// Cache-through embedding: hit returns the stored vector with zero extractor
/// invocations; miss computes, inserts, returns. Null cache disables sharing.
Mvec embed_or_fetch(EmbeddingCache* cache, Extractor& extractor, std::string_view raw);

/// Intermediate state for window-function batch inference: rows accumulate
/// until batch_size is reached, one stacked inference runs, results wait for
/// in-order emission.
struct WindowState {
  std::uint64_t batch_size = 1;
  std::vector<Mvec> pending;
  std::vector<std::size_t> pending_rows;  // source row indices
  std::vector<Mvec> results;
  std::vector<std::size_t> result_rows;

  bool filled() const { return pending.size() >= batch_size; }
};

/// Copies the row into the window; true when the batch just filled.
bool window_accumulate(WindowState& state, Mvec row_tensor, std::size_t row_index);

/// Stacks equal-shape rows along a new leading batch dimension.
Mvec stack_batch(const std::vector<Mvec>& rows,
                 const std::vector<std::size_t>& row_indices);

/// Runs the pending batch through the kernel and caches per-row results in
/// input order. Shape errors name the offending source row.
void window_infer(WindowState& state, const StubModel& model,
                  const DeviceProfile& device);

/// Releases accumulated raw rows and hands back the cached results.
std::vector<std::pair<std::size_t, Mvec>> window_cleanup(WindowState& state);

struct ExecOptions {
  std::optional<std::uint64_t> batch_override;
  bool use_cache = true;
  double rel_row_cost = 1e-7;      // seconds per row per relational operator
  std::size_t queue_capacity = 4;  // bounded queue slots between stages
  std::size_t stream_chunk = 1024; // rows per relational pipeline chunk
  bool realtime = false;           // sleep simulated durations
};

struct NodeMetrics {
  std::uint32_t node_id = 0;
  NodeKind kind = NodeKind::SCAN;
  std::string device;
  double sim_seconds = 0.0;
  std::uint64_t rows_out = 0;
  std::uint64_t batches = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
};

struct RunMetrics {
  std::string mode;          // sequential | pipeline
  double sim_total = 0.0;    // sum of node times
  double sim_makespan = 0.0; // overlapped completion time (== total when sequential)
  std::uint64_t rows_out = 0;
  std::uint64_t batches = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t extractor_calls = 0;
  std::vector<NodeMetrics> nodes;

  std::string report(const std::string& format) const;  // "table" | "jsonlike"
};

/// Everything a run needs besides the plan.
struct ExecEnv {
  const ModelRepo* repo = nullptr;
  const TableCatalog* tables = nullptr;
  EmbeddingCache* cache = nullptr;
  Extractor* extractor = nullptr;
  std::vector<DeviceProfile> devices;
  std::map<std::uint64_t, StubModel>* stub_cache = nullptr;
  std::map<std::uint64_t, std::shared_ptr<RemoteClient>>* remote_clients = nullptr;
  ExecOptions options;

  const DeviceProfile& device(const std::string& name) const;
  const StubModel& stub(std::uint64_t model_id) const;
  RemoteClient& remote(std::uint64_t model_id) const;
};

/// Sequential interpreter: materializes every node in execution order.
RowBatch execute(const PlanDag& g, const std::vector<std::uint32_t>& order,
                 ExecEnv& env, RunMetrics* metrics = nullptr);

/// Staged pipeline execution: threads connected by bounded SPSC queues,
/// identical results to execute(), overlapped simulated makespan.
RowBatch pipeline_run(const PlanDag& g, const std::vector<std::uint32_t>& order,
                      ExecEnv& env, RunMetrics* metrics = nullptr);

}  // namespace taskdb
