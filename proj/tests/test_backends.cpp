#include <doctest.h>

#include <functional>

#include "taskdb/backends.hpp"
#include "taskdb/rng.hpp"
#include "taskdb/zoo.hpp"
#include "test_util.hpp"

using namespace taskdb;

namespace {

DeviceProfile cpu_1e12() {
  DeviceProfile d = DeviceProfile::default_cpu();
  d.flops = 1e12;
  d.mem_bw = 1e10;
  return d;
}

}  // namespace

TEST_CASE("exec_time follows the flops ratio") {
  ModelProfile m{1e9, 0};
  DeviceProfile d = cpu_1e12();
  CHECK(exec_time(m, d, 1000) == doctest::Approx(1.0));
  CHECK(exec_time(m, d, 0) == 0.0);
  CHECK(exec_time({0, 0}, d, 12345) == 0.0);
  CHECK(exec_time(m, DeviceProfile::default_remote(), 1000) == 0.0);
}

TEST_CASE("trans_cost per device kind") {
  ModelProfile m{0, 1e9};
  DeviceProfile gpu = DeviceProfile::default_gpu();
  gpu.mem_bw = 1e10;
  gpu.gpu_bw = 1e10;
  gpu.latency = 0.01;
  CHECK(trans_cost(m, gpu) == doctest::Approx(0.21));

  DeviceProfile cpu = cpu_1e12();
  CHECK(trans_cost(m, cpu) == doctest::Approx(0.1));
  CHECK(trans_cost({0, 0}, cpu) == 0.0);

  DeviceProfile remote = DeviceProfile::default_remote();
  remote.latency = 0.05;
  CHECK(trans_cost(m, remote) == doctest::Approx(0.05));
}

TEST_CASE("total_cost composes exec and transfer") {
  ModelProfile m{1e9, 1e9};
  DeviceProfile gpu = DeviceProfile::default_gpu();
  gpu.flops = 1e12;
  gpu.mem_bw = 1e10;
  gpu.gpu_bw = 1e10;
  gpu.latency = 0.01;
  auto est = total_cost(m, gpu, 1000);
  CHECK(est.total == doctest::Approx(1.21));
  CHECK(est.total == est.exec_time + est.trans_cost);

  // Same model on a 1e11-flops cpu: 10 s exec + 0.1 s transfer.
  DeviceProfile cpu = DeviceProfile::default_cpu();
  cpu.mem_bw = 1e10;
  auto cpu_est = total_cost(m, cpu, 1000);
  CHECK(cpu_est.total == doctest::Approx(10.1));

  auto zero_rows = total_cost(m, gpu, 0);
  CHECK(zero_rows.total == doctest::Approx(trans_cost(m, gpu)));

  DeviceProfile remote = DeviceProfile::default_remote();
  auto rem = total_cost(m, remote, 100);
  CHECK(rem.total ==
        doctest::Approx(remote.per_row_latency * 100 + remote.latency));
  CHECK(rem.total == rem.exec_time + rem.trans_cost);
}

TEST_CASE("choose_device picks the analytic argmin with CPU-first ties") {
  std::vector<DeviceProfile> devices = {DeviceProfile::default_cpu(),
                                        DeviceProfile::default_gpu()};

  // Series-shaped model over 10k rows: transfer overhead keeps it on CPU.
  CHECK(choose_device(series_model_profile(), devices, 10000).kind ==
        DeviceKind::CPU);
  // Image-shaped model over 10k rows: GPU wins on compute.
  CHECK(choose_device(image_model_profile(), devices, 10000).kind ==
        DeviceKind::GPU);

  // Identical devices except kind: tie resolves to CPU.
  DeviceProfile a = DeviceProfile::default_cpu();
  DeviceProfile b = a;
  b.kind = DeviceKind::GPU;
  b.gpu_bw = 1e30;  // transfer terms negligible
  b.latency = 0.0;
  ModelProfile zero{0, 0};
  CHECK(choose_device(zero, {b, a}, 5).kind == DeviceKind::CPU);

  CHECK_THROWS_AS(choose_device(zero, {}, 1), Error);
}

TEST_CASE("choose_device equals brute force over randomized profiles") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    ModelProfile m{rng.uniform(1e3, 1e10), rng.uniform(1e3, 1e9)};
    std::vector<DeviceProfile> devices;
    std::size_t n_devices = 1 + rng.below(4);
    for (std::size_t i = 0; i < n_devices; ++i) {
      DeviceProfile d;
      switch (rng.below(3)) {
        case 0: d = DeviceProfile::default_cpu(); break;
        case 1: d = DeviceProfile::default_gpu(); break;
        default: d = DeviceProfile::default_remote(); break;
      }
      d.flops = rng.uniform(1e10, 1e14);
      d.mem_bw = rng.uniform(1e9, 1e11);
      d.gpu_bw = rng.uniform(1e9, 1e11);
      d.latency = rng.uniform01() * 0.01;
      d.per_row_latency = rng.uniform01() * 1e-3;
      devices.push_back(d);
    }
    std::uint64_t nrows = rng.below(100000);
    const DeviceProfile& chosen = choose_device(m, devices, nrows);
    double chosen_total = total_cost(m, chosen, nrows).total;
    for (const DeviceProfile& d : devices)
      CHECK(chosen_total <= total_cost(m, d, nrows).total);
  }
}

TEST_CASE("cost monotonicity in rows, model size, and device speed") {
  ModelProfile m{1e8, 1e8};
  DeviceProfile gpu = DeviceProfile::default_gpu();
  double prev = -1.0;
  for (std::uint64_t n : {0, 10, 100, 1000, 100000}) {
    double t = total_cost(m, gpu, n).total;
    CHECK(t >= prev);
    prev = t;
  }
  ModelProfile bigger{2e8, 2e8};
  CHECK(total_cost(bigger, gpu, 100).total >= total_cost(m, gpu, 100).total);
  DeviceProfile faster = gpu;
  faster.flops *= 2;
  faster.mem_bw *= 2;
  faster.gpu_bw *= 2;
  CHECK(total_cost(m, faster, 100).total <= total_cost(m, gpu, 100).total);
}

TEST_CASE("crossover exists and bisection matches a linear scan") {
  ModelProfile m = series_model_profile();
  DeviceProfile cpu = DeviceProfile::default_cpu();
  DeviceProfile gpu = DeviceProfile::default_gpu();
  auto cross = crossover_rows(m, cpu, gpu);
  REQUIRE(cross.has_value());
  // CPU wins strictly below the crossover, GPU at and above it.
  CHECK(total_cost(m, gpu, *cross).total < total_cost(m, cpu, *cross).total);
  CHECK(total_cost(m, gpu, *cross - 1).total >= total_cost(m, cpu, *cross - 1).total);

  // Randomized pairs satisfying the preconditions.
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    ModelProfile rm{rng.uniform(1e4, 1e8), rng.uniform(1e5, 1e8)};
    DeviceProfile c = DeviceProfile::default_cpu();
    c.flops = rng.uniform(1e10, 1e12);
    DeviceProfile g = DeviceProfile::default_gpu();
    g.flops = c.flops * rng.uniform(2.0, 100.0);
    g.latency = rng.uniform(1e-4, 1e-2);
    if (trans_cost(rm, g) <= trans_cost(rm, c)) continue;
    auto n = crossover_rows(rm, c, g);
    REQUIRE(n.has_value());
    CHECK(total_cost(rm, g, *n).total < total_cost(rm, c, *n).total);
    if (*n > 0)
      CHECK(total_cost(rm, g, *n - 1).total >= total_cost(rm, c, *n - 1).total);
  }
}

TEST_CASE("stub model applies affine chains deterministically") {
  StubModel identity = StubModel::identity(1, {1e6, 1e4}, 3);
  Mvec in({3}, {1, 2, 3});
  CHECK(identity.apply(in).bit_equal(Mvec({3}, {1, 2, 3})));

  StubModel doubler = StubModel::scaler(2, {1e6, 1e4}, 3, 2.0);
  CHECK(doubler.apply(in).bit_equal(Mvec({3}, {2, 4, 6})));

  // Two-layer chain y = B(Ax + a) + b computed by hand.
  StubLayer l0{"l0", Matrix(2, 3, {1, 0, 0, 0, 1, 1}), {1.0, 0.0}};
  StubLayer l1{"l1", Matrix(1, 2, {2, -1}), {0.5}};
  StubModel chain(3, {1e6, 1e4}, {l0, l1});
  // l0: [1+1, 2+3+0] = [2, 5]; l1: 2*2 - 5 + 0.5 = -0.5.
  CHECK(chain.apply(in).data()[0] == doctest::Approx(-0.5));

  CHECK_THROWS_AS(identity.apply(Mvec({4}, {1, 2, 3, 4})), Error);
}

TEST_CASE("run_batch charges the cost model's simulated time") {
  StubModel identity = StubModel::identity(1, {1e9, 1e6}, 2);
  DeviceProfile gpu = DeviceProfile::default_gpu();
  std::vector<Mvec> batch = {Mvec({2}, {1, 2}), Mvec({2}, {3, 4}),
                             Mvec({2}, {5, 6})};
  auto result = run_batch(identity, batch, gpu);
  REQUIRE(result.outputs.size() == 3);
  CHECK(result.outputs[2].bit_equal(Mvec({2}, {5, 6})));
  CHECK(result.simulated_elapsed ==
        doctest::Approx(total_cost(identity.profile(), gpu, 3).total));

  auto empty = run_batch(identity, {}, gpu);
  CHECK(empty.outputs.empty());
  CHECK(empty.simulated_elapsed ==
        doctest::Approx(trans_cost(identity.profile(), gpu)));
}

TEST_CASE("stub blob serialization round-trips through the repo") {
  TempDir dir("stub_blob");
  ModelRepo repo(dir.path());
  StubModel stub = StubModel::scaler(0, {1e5, 2e4}, 4, 3.0, 0.25);
  BaseDescriptor arch = StubModel::architecture("affine4", stub.layers());
  auto id = repo.register_blob_model("stub", "1.0", stub.serialize(arch), {1e5, 2e4});

  StubModel loaded = StubModel::from_assembled(repo.load_model(id));
  Mvec in({4}, {1, 2, 3, 4});
  CHECK(loaded.apply(in).bit_equal(stub.apply(in)));
}

TEST_CASE("decoupled layers assemble into the same kernel as the blob") {
  TempDir dir("stub_dec");
  ModelRepo repo(dir.path());
  StubModel stub = StubModel::scaler(0, {1e5, 2e4}, 4, -1.5);
  BaseDescriptor arch = StubModel::architecture("affine4", stub.layers());
  repo.register_base(arch);
  std::vector<LayerRecord> layers;
  for (std::size_t i = 0; i < stub.layers().size(); ++i)
    layers.push_back(StubModel::layer_record(stub.layers()[i], std::uint32_t(i)));
  auto id = repo.register_decoupled_model("stub", "1.0", "affine4", layers, {1e5, 2e4});

  StubModel loaded = StubModel::from_assembled(repo.load_model(id));
  Mvec in({4}, {4, 3, 2, 1});
  CHECK(loaded.apply(in).bit_equal(stub.apply(in)));
}

TEST_CASE("synthetic zoo produces an exactly factorizable matrix") {
  SyntheticZoo zoo = make_synthetic_zoo({12, 9, 3, 16, 13});
  CHECK(zoo.V.values.rows() == 12);
  CHECK(zoo.V.values.cols() == 9);
  zoo.V.validate();
  CHECK(reconstruction_error(zoo.V.values, zoo.W0, zoo.H0) < 1e-12);

  // Noisy copies stay near the original feature vector.
  TaskFeatures noisy = zoo.noisy_copy(4, 0.01, 99);
  double dist = 0.0, norm = 0.0;
  for (std::size_t d = 0; d < noisy.vector.size(); ++d) {
    double diff = noisy.vector[d] - zoo.features[4].vector[d];
    dist += diff * diff;
    norm += zoo.features[4].vector[d] * zoo.features[4].vector[d];
  }
  CHECK(std::sqrt(dist) < 0.05 * std::sqrt(norm));
}
