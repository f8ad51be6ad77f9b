#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskdb/cost_model.hpp"
#include "taskdb/matrix.hpp"
#include "taskdb/model_repo.hpp"
#include "taskdb/mvec.hpp"

namespace taskdb {

/// One affine stage of a stub kernel: y = W x + b, W is [out x in].
struct StubLayer {
  std::string name;
  Matrix weight;
  std::vector<double> bias;  // empty means no bias
};

/// Deterministic stand-in for a real network: a chain of affine layers whose
/// parameters come from catalog rows. Identical input always produces
/// identical output, which is what makes executor results checkable.
class StubModel {
 public:
  StubModel() = default;
  StubModel(std::uint64_t model_id, ModelProfile profile, std::vector<StubLayer> layers);

  std::uint64_t model_id() const { return model_id_; }
  const ModelProfile& profile() const { return profile_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  const std::vector<StubLayer>& layers() const { return layers_; }

  /// Applies the layer chain to a flattened input of input_dim elements.
  Mvec apply(const Mvec& input) const;

  /// All-in-one payload: architecture descriptor text plus every layer
  /// section, the unit a blob registration stores.
  std::vector<std::uint8_t> serialize(const BaseDescriptor& arch) const;
  static StubModel parse_blob(std::uint64_t model_id, ModelProfile profile,
                              std::span<const std::uint8_t> payload);

  /// Builds the kernel from catalog layer rows (decoupled path) — weights
  /// must be rank-2 [out x in], biases rank-1 [out].
  static StubModel from_layers(std::uint64_t model_id, ModelProfile profile,
                               const std::vector<LayerRecord>& layers);
  /// Dispatches on the assembled model's storage kind.
  static StubModel from_assembled(const AssembledModel& assembled);

  /// Single identity layer of the given width.
  static StubModel identity(std::uint64_t model_id, ModelProfile profile,
                            std::size_t dim);
  /// Single layer y = scale * x + shift (diagonal), handy in tests.
  static StubModel scaler(std::uint64_t model_id, ModelProfile profile,
                          std::size_t dim, double scale, double shift = 0.0);

  static LayerRecord layer_record(const StubLayer& layer, std::uint32_t index);
  static BaseDescriptor architecture(const std::string& base_name,
                                     const std::vector<StubLayer>& layers);

 private:
  std::uint64_t model_id_ = 0;
  ModelProfile profile_;
  std::vector<StubLayer> layers_;
};

struct BatchResult {
  std::vector<Mvec> outputs;
  double simulated_elapsed = 0.0;  // seconds, equals total_cost(...).total
};

/// Runs the kernel over the batch and charges the cost model's time for
/// |batch| rows on the device. Wall clock is not slept.
BatchResult run_batch(const StubModel& model, const std::vector<Mvec>& batch,
                      const DeviceProfile& device);

/// Archetype model profiles calibrated against the default device set:
/// tiny per-row compute keeps series and text heads on the CPU while the
/// convolutional image profile crosses over to the GPU immediately.
ModelProfile series_model_profile();   // lightweight MLP over series rows
ModelProfile text_model_profile();     // small head over pre-embedded text
ModelProfile image_model_profile();    // convolutional backbone

}  // namespace taskdb
