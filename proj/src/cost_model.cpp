#include "taskdb/cost_model.hpp"

#include <algorithm>
#include <cmath>

namespace taskdb {

const char* device_kind_name(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::CPU: return "cpu";
    case DeviceKind::GPU: return "gpu";
    case DeviceKind::REMOTE: return "remote";
  }
  return "?";
}

DeviceKind device_kind_from(const std::string& name) {
  if (name == "cpu" || name == "CPU") return DeviceKind::CPU;
  if (name == "gpu" || name == "GPU") return DeviceKind::GPU;
  if (name == "remote" || name == "REMOTE") return DeviceKind::REMOTE;
  raise(ErrorCode::InvalidArgument, "unknown device kind '" + name + "'");
}

DeviceProfile DeviceProfile::default_cpu() {
  DeviceProfile d;
  d.kind = DeviceKind::CPU;
  d.name = "cpu0";
  d.flops = 1e11;
  d.mem_bw = 2e10;
  d.latency = 0.0;
  d.dispatch = 2e-6;
  return d;
}

DeviceProfile DeviceProfile::default_gpu() {
  DeviceProfile d;
  d.kind = DeviceKind::GPU;
  d.name = "gpu0";
  d.flops = 1e13;
  d.mem_bw = 2e10;
  d.gpu_bw = 1.2e10;
  d.latency = 5e-3;
  d.dispatch = 5e-6;
  return d;
}

DeviceProfile DeviceProfile::default_remote() {
  DeviceProfile d;
  d.kind = DeviceKind::REMOTE;
  d.name = "remote0";
  d.latency = 5e-2;
  d.per_row_latency = 2e-4;
  d.dispatch = 0.0;
  return d;
}

void DeviceProfile::validate() const {
  if (kind != DeviceKind::REMOTE && flops <= 0)
    raise(ErrorCode::InvalidArgument, "device flops must be positive");
  if (kind != DeviceKind::REMOTE && mem_bw <= 0)
    raise(ErrorCode::InvalidArgument, "device mem_bw must be positive");
  if (kind == DeviceKind::GPU && gpu_bw <= 0)
    raise(ErrorCode::InvalidArgument, "gpu_bw must be positive");
  if (latency < 0 || per_row_latency < 0 || dispatch < 0)
    raise(ErrorCode::InvalidArgument, "device latencies must be nonnegative");
}

double exec_time(const ModelProfile& m, const DeviceProfile& d, std::uint64_t nrows) {
  if (d.kind == DeviceKind::REMOTE) return 0.0;
  return m.model_flops / d.flops * double(nrows);
}

double trans_cost(const ModelProfile& m, const DeviceProfile& d) {
  switch (d.kind) {
    case DeviceKind::CPU:
      return m.model_size / d.mem_bw;
    case DeviceKind::GPU:
      return m.model_size / d.mem_bw + m.model_size / d.gpu_bw + d.latency;
    case DeviceKind::REMOTE:
      return d.latency;
  }
  return 0.0;
}

CostEstimate total_cost(const ModelProfile& m, const DeviceProfile& d,
                        std::uint64_t nrows) {
  CostEstimate est;
  est.device = d.kind;
  est.device_name = d.name;
  est.nrows = nrows;
  if (d.kind == DeviceKind::REMOTE) {
    est.exec_time = d.per_row_latency * double(nrows);
    est.trans_cost = d.latency;
  } else {
    est.exec_time = exec_time(m, d, nrows);
    est.trans_cost = trans_cost(m, d);
  }
  est.total = est.exec_time + est.trans_cost;
  return est;
}

namespace {

int kind_preference(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::CPU: return 0;
    case DeviceKind::GPU: return 1;
    case DeviceKind::REMOTE: return 2;
  }
  return 3;
}

}  // namespace

const DeviceProfile& choose_device(const ModelProfile& m,
                                   const std::vector<DeviceProfile>& devices,
                                   std::uint64_t nrows) {
  if (devices.empty()) raise(ErrorCode::NoDevices, "empty device list");
  const DeviceProfile* best = &devices.front();
  double best_total = total_cost(m, *best, nrows).total;
  for (std::size_t i = 1; i < devices.size(); ++i) {
    double t = total_cost(m, devices[i], nrows).total;
    if (t < best_total ||
        (t == best_total &&
         kind_preference(devices[i].kind) < kind_preference(best->kind))) {
      best = &devices[i];
      best_total = t;
    }
  }
  return *best;
}

std::optional<std::uint64_t> crossover_rows(const ModelProfile& m,
                                            const DeviceProfile& cpu,
                                            const DeviceProfile& gpu) {
  auto gpu_wins = [&](std::uint64_t n) {
    return total_cost(m, gpu, n).total < total_cost(m, cpu, n).total;
  };
  if (gpu_wins(0)) return 0;  // gpu already cheaper with no rows
  std::uint64_t hi = 1;
  const std::uint64_t bound = std::uint64_t(1) << 50;
  while (!gpu_wins(hi)) {
    if (hi >= bound) return std::nullopt;
    hi *= 2;
  }
  std::uint64_t lo = hi / 2;  // gpu loses at lo, wins at hi
  while (hi - lo > 1) {
    std::uint64_t mid = lo + (hi - lo) / 2;
    if (gpu_wins(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace taskdb
