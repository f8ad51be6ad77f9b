#include "taskdb/backends.hpp"

#include <cstring>

namespace taskdb {

namespace {

constexpr char kStubMagic[4] = {'S', 'T', 'U', 'B'};
constexpr std::uint8_t kStubVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + i]) << (8 * i);
  return v;
}

StubLayer layer_from_record(const LayerRecord& rec) {
  if (rec.weight.rank() != 2)
    raise(ErrorCode::ShapeMismatch, "stub layer '" + rec.layer_name +
                                        "' weight must be rank-2, got " +
                                        rec.weight.shape_string());
  StubLayer layer;
  layer.name = rec.layer_name;
  layer.weight =
      Matrix(rec.weight.shape()[0], rec.weight.shape()[1], rec.weight.data());
  if (rec.bias) {
    if (rec.bias->rank() != 1 || rec.bias->shape()[0] != rec.weight.shape()[0])
      raise(ErrorCode::ShapeMismatch,
            "stub layer '" + rec.layer_name + "' bias must be rank-1 [out]");
    layer.bias = rec.bias->data();
  }
  return layer;
}

}  // namespace

StubModel::StubModel(std::uint64_t model_id, ModelProfile profile,
                     std::vector<StubLayer> layers)
    : model_id_(model_id), profile_(profile), layers_(std::move(layers)) {
  if (layers_.empty())
    raise(ErrorCode::InvalidArgument, "stub model needs at least one layer");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].weight.cols() != layers_[i - 1].weight.rows())
      raise(ErrorCode::ShapeMismatch,
            "layer " + std::to_string(i) + " input width does not match layer " +
                std::to_string(i - 1) + " output width");
  }
}

std::size_t StubModel::input_dim() const { return layers_.front().weight.cols(); }
std::size_t StubModel::output_dim() const { return layers_.back().weight.rows(); }

Mvec StubModel::apply(const Mvec& input) const {
  if (input.size() != input_dim())
    raise(ErrorCode::ShapeMismatch, "input " + input.shape_string() + " has " +
                                        std::to_string(input.size()) +
                                        " elements, kernel wants " +
                                        std::to_string(input_dim()));
  std::vector<double> x = input.data();
  for (const StubLayer& layer : layers_) {
    std::vector<double> y(layer.weight.rows(), 0.0);
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const double* row = layer.weight.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < layer.weight.cols(); ++c) acc += row[c] * x[c];
      if (!layer.bias.empty()) acc += layer.bias[r];
      y[r] = acc;
    }
    x = std::move(y);
  }
  std::uint64_t out_dim = x.size();
  return Mvec({out_dim}, std::move(x));
}

LayerRecord StubModel::layer_record(const StubLayer& layer, std::uint32_t index) {
  LayerRecord rec;
  rec.layer_name = layer.name;
  rec.layer_index = index;
  rec.weight = Mvec({layer.weight.rows(), layer.weight.cols()}, layer.weight.values());
  if (!layer.bias.empty()) rec.bias = Mvec({layer.bias.size()}, layer.bias);
  return rec;
}

BaseDescriptor StubModel::architecture(const std::string& base_name,
                                       const std::vector<StubLayer>& layers) {
  BaseDescriptor desc;
  desc.name = base_name;
  for (const StubLayer& layer : layers) {
    BaseLayerSpec spec;
    spec.name = layer.name;
    spec.weight_shape = {layer.weight.rows(), layer.weight.cols()};
    if (!layer.bias.empty())
      spec.bias_shape = std::vector<std::uint64_t>{layer.bias.size()};
    desc.layers.push_back(std::move(spec));
  }
  return desc;
}

std::vector<std::uint8_t> StubModel::serialize(const BaseDescriptor& arch) const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kStubMagic, kStubMagic + 4);
  out.push_back(kStubVersion);
  put_u32(out, std::uint32_t(layers_.size()));
  std::string desc = arch.serialize();
  put_u32(out, std::uint32_t(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto section = encode_layer_section(layer_record(layers_[i], std::uint32_t(i)));
    out.insert(out.end(), section.begin(), section.end());
  }
  return out;
}

StubModel StubModel::parse_blob(std::uint64_t model_id, ModelProfile profile,
                                std::span<const std::uint8_t> payload) {
  if (payload.size() < 13 || std::memcmp(payload.data(), kStubMagic, 4) != 0)
    raise(ErrorCode::CorruptFrame, "payload is not a stub model blob");
  if (payload[4] != kStubVersion)
    raise(ErrorCode::CorruptFrame, "unsupported stub blob version");
  std::size_t off = 5;
  std::uint32_t nlayers = get_u32(payload, off);
  off += 4;
  std::uint32_t desc_len = get_u32(payload, off);
  off += 4;
  if (payload.size() - off < desc_len)
    raise(ErrorCode::CorruptFrame, "truncated stub blob");
  off += desc_len;  // descriptor text is advisory here; layers carry the data
  std::vector<StubLayer> layers;
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    LayerRecord rec = decode_layer_section(payload, &off);
    layers.push_back(layer_from_record(rec));
  }
  return StubModel(model_id, profile, std::move(layers));
}

StubModel StubModel::from_layers(std::uint64_t model_id, ModelProfile profile,
                                 const std::vector<LayerRecord>& records) {
  std::vector<StubLayer> layers;
  layers.reserve(records.size());
  for (const LayerRecord& rec : records) layers.push_back(layer_from_record(rec));
  return StubModel(model_id, profile, std::move(layers));
}

StubModel StubModel::from_assembled(const AssembledModel& assembled) {
  switch (assembled.record.storage_kind) {
    case StorageKind::Blob:
      return parse_blob(assembled.record.model_id, assembled.record.profile,
                        assembled.payload);
    case StorageKind::Decoupled:
      return from_layers(assembled.record.model_id, assembled.record.profile,
                         assembled.layers);
    case StorageKind::Api:
      raise(ErrorCode::InvalidArgument,
            "api models execute remotely, not as local stubs");
  }
  raise(ErrorCode::InvalidArgument, "unknown storage kind");
}

StubModel StubModel::identity(std::uint64_t model_id, ModelProfile profile,
                              std::size_t dim) {
  StubLayer layer;
  layer.name = "identity";
  layer.weight = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) layer.weight.at(i, i) = 1.0;
  return StubModel(model_id, profile, {std::move(layer)});
}

StubModel StubModel::scaler(std::uint64_t model_id, ModelProfile profile,
                            std::size_t dim, double scale, double shift) {
  StubLayer layer;
  layer.name = "scale";
  layer.weight = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) layer.weight.at(i, i) = scale;
  if (shift != 0.0) layer.bias.assign(dim, shift);
  return StubModel(model_id, profile, {std::move(layer)});
}

BatchResult run_batch(const StubModel& model, const std::vector<Mvec>& batch,
                      const DeviceProfile& device) {
  BatchResult result;
  result.outputs.reserve(batch.size());
  for (const Mvec& row : batch) result.outputs.push_back(model.apply(row));
  result.simulated_elapsed = total_cost(model.profile(), device, batch.size()).total;
  return result;
}

ModelProfile series_model_profile() { return ModelProfile{1e4, 1e5}; }
ModelProfile text_model_profile() { return ModelProfile{2.5e4, 2e5}; }
ModelProfile image_model_profile() { return ModelProfile{2e9, 6e7}; }

}  // namespace taskdb
