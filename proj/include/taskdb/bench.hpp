#pragma once

#include <filesystem>
#include <string>

#include "taskdb/engine.hpp"

namespace taskdb {

struct BenchOptions {
  std::filesystem::path out_dir = "bench_out";
  std::uint64_t rows = 10000;
  std::uint64_t seed = 42;
};

struct BenchReport {
  std::string summary;  // human-readable digest of the four sweeps

  // machine-readable rows, also written as CSVs into out_dir
  std::vector<std::pair<std::uint64_t, double>> batch_sweep;  // B -> sim seconds
  std::map<std::string, std::string> device_placement;        // query -> device
  double cache_cold_seconds = 0.0;
  double cache_warm_seconds = 0.0;
  std::uint64_t cache_cold_extractor_calls = 0;
  std::uint64_t cache_warm_extractor_calls = 0;
  std::map<std::string, std::uint64_t> storage_bytes;  // kind -> bytes
};

/// Desk-scale sweeps over a synthetic fixture: batch sizes, device
/// placement per task archetype, embedding-cache effect, and storage
/// strategy footprints. Writes plot-ready CSVs into out_dir.
BenchReport run_bench(const BenchOptions& options);

/// Builds the synthetic fixture (tables, stub models, tasks, selector) in a
/// fresh engine rooted at data_dir. Returns the engine ready for queries.
std::unique_ptr<Engine> make_bench_engine(const std::filesystem::path& data_dir,
                                          std::uint64_t rows, std::uint64_t seed);

}  // namespace taskdb
