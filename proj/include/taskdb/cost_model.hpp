#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taskdb/error.hpp"

namespace taskdb {

enum class DeviceKind { CPU, GPU, REMOTE };

const char* device_kind_name(DeviceKind kind);
DeviceKind device_kind_from(const std::string& name);

/// Analytic device description feeding the operator cost equations.
/// Defaults are calibration constants: a commodity CPU against a discrete
/// GPU whose transfer overhead makes tiny models cheaper to keep on the CPU.
struct DeviceProfile {
  DeviceKind kind = DeviceKind::CPU;
  std::string name = "cpu";
  double flops = 1e11;          // peak floating-point ops / second
  double mem_bw = 2e10;         // main-memory bandwidth, bytes / second
  double gpu_bw = 1.2e10;       // host-to-device bandwidth, bytes / second (GPU)
  double latency = 0.0;         // fixed I/O or network latency, seconds
  double per_row_latency = 0.0; // REMOTE end-to-end seconds per row
  double dispatch = 2e-6;       // per-batch launch overhead, seconds

  static DeviceProfile default_cpu();
  static DeviceProfile default_gpu();
  static DeviceProfile default_remote();

  void validate() const;
};

/// Per-model constants for the cost equations.
struct ModelProfile {
  double model_flops = 0.0;  // floating-point ops per input row
  double model_size = 0.0;   // parameter bytes
};

struct CostEstimate {
  double exec_time = 0.0;   // seconds
  double trans_cost = 0.0;  // seconds
  double total = 0.0;       // exec_time + trans_cost
  DeviceKind device = DeviceKind::CPU;
  std::string device_name;
  std::uint64_t nrows = 0;
};

/// Compute seconds for nrows inputs: model_flops / device flops per row.
/// REMOTE compute is unobservable and reports 0 here.
double exec_time(const ModelProfile& m, const DeviceProfile& d, std::uint64_t nrows);

/// Staging seconds: CPU pays a main-memory pass, GPU adds the host-to-device
/// copy and its fixed latency, REMOTE reduces to the fixed network latency.
double trans_cost(const ModelProfile& m, const DeviceProfile& d);

/// Eq-style additive total. For REMOTE the per-row end-to-end latency is
/// carried in exec_time so total = per_row_latency * nrows + latency.
CostEstimate total_cost(const ModelProfile& m, const DeviceProfile& d,
                        std::uint64_t nrows);

/// Argmin of total_cost over the device list; ties prefer CPU, then GPU,
/// then REMOTE.
const DeviceProfile& choose_device(const ModelProfile& m,
                                   const std::vector<DeviceProfile>& devices,
                                   std::uint64_t nrows);

/// Smallest integer row count at which the gpu total cost drops strictly
/// below the cpu total cost, found by bisection. Requires gpu.flops >
/// cpu.flops and gpu staging cost above cpu staging cost; nullopt when no
/// crossover exists below the search bound.
std::optional<std::uint64_t> crossover_rows(const ModelProfile& m,
                                            const DeviceProfile& cpu,
                                            const DeviceProfile& gpu);

}  // namespace taskdb
