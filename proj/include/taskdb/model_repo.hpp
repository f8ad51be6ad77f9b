#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "taskdb/cost_model.hpp"
#include "taskdb/mvec.hpp"

namespace taskdb {

enum class StorageKind { Blob, Decoupled, Api };

const char* storage_kind_name(StorageKind kind);
StorageKind storage_kind_from(const std::string& name);

/// Registration record for an externally hosted model endpoint.
struct ApiModelSpec {
  std::string endpoint;
  std::string input_schema;
  std::string output_schema;
  double expected_latency = 0.0;     // seconds
  std::string auth_ref;              // opaque key into external config
  std::uint64_t quota = 1'000'000;   // max requests per window
  double timeout = 5.0;              // seconds per attempt
  std::uint32_t max_retries = 2;

  void validate() const;
  std::string canonical() const;  // deterministic serialization for digests
};

struct ModelRecord {
  std::uint64_t model_id = 0;
  std::string name;
  std::string version;
  StorageKind storage_kind = StorageKind::Blob;
  std::string base_model;  // Decoupled only
  std::string checksum;    // hex SHA-256 over payload bytes
  ModelProfile profile;
  std::string created_at;
  ApiModelSpec api;                      // Api only
  std::vector<std::string> layer_names;  // Decoupled only, in index order
};

struct LayerRecord {
  std::uint64_t model_id = 0;
  std::string layer_name;
  std::uint32_t layer_index = 0;
  Mvec weight;
  std::optional<Mvec> bias;
};

struct BaseLayerSpec {
  std::string name;
  std::vector<std::uint64_t> weight_shape;
  std::optional<std::vector<std::uint64_t>> bias_shape;
};

/// Architecture template pointed at by decoupled variants: ordered layer
/// names plus expected parameter shapes.
struct BaseDescriptor {
  std::string name;
  std::vector<BaseLayerSpec> layers;

  std::string serialize() const;
  static BaseDescriptor parse(const std::string& text, const std::string& name);
};

struct AssembledModel {
  ModelRecord record;
  std::vector<std::uint8_t> payload;  // Blob
  std::vector<LayerRecord> layers;    // Decoupled, index order
};

// Layer payload section: the unit both layer files and stub blobs embed, so
// a blob holding the same parameters is byte-comparable with layer rows.
std::vector<std::uint8_t> encode_layer_section(const LayerRecord& layer);
LayerRecord decode_layer_section(std::span<const std::uint8_t> bytes,
                                 std::size_t* offset);

/// Persistent model catalog over a single directory:
///   catalog.idx           append-only record log, last record per id wins
///   blobs/<id>.bin        whole-model payloads
///   layers/<id>/<i>.mvec  one file per decoupled layer
///   bases/<name>.desc     architecture templates
/// Registration and updates serialize through a writer lock; loads are
/// concurrent and always see a complete layer set.
class ModelRepo {
 public:
  explicit ModelRepo(std::filesystem::path dir);

  void register_base(const BaseDescriptor& base);
  bool has_base(const std::string& name) const;
  BaseDescriptor load_base(const std::string& name) const;

  std::uint64_t register_blob_model(const std::string& name, const std::string& version,
                                    std::span<const std::uint8_t> payload,
                                    const ModelProfile& profile);
  std::uint64_t register_decoupled_model(const std::string& name,
                                         const std::string& version,
                                         const std::string& base_model,
                                         const std::vector<LayerRecord>& layers,
                                         const ModelProfile& profile);
  std::uint64_t register_api_model(const std::string& name, const std::string& version,
                                   const ApiModelSpec& spec,
                                   const ModelProfile& profile = {});

  AssembledModel load_model(std::uint64_t model_id) const;
  std::vector<LayerRecord> load_layers(std::uint64_t model_id,
                                       const std::vector<std::string>& layer_names) const;
  /// Replaces one layer in place and returns the recomputed checksum.
  std::string update_layer(std::uint64_t model_id, const LayerRecord& layer);

  bool verify_checksum(std::uint64_t model_id) const;
  std::vector<ModelRecord> list_models(
      std::optional<StorageKind> filter = std::nullopt) const;
  ModelRecord get(std::uint64_t model_id) const;
  std::optional<std::uint64_t> find(const std::string& name,
                                    const std::string& version) const;

  /// Payload bytes this model occupies on disk (metadata bytes for Api).
  std::uint64_t storage_footprint(std::uint64_t model_id) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void load_catalog();
  void append_record(const ModelRecord& rec);
  const ModelRecord& record_or_throw(std::uint64_t model_id) const;
  std::string compute_checksum(const ModelRecord& rec) const;
  std::filesystem::path blob_path(std::uint64_t id) const;
  std::filesystem::path layer_path(std::uint64_t id, std::uint32_t index) const;
  std::filesystem::path base_path(const std::string& name) const;
  LayerRecord read_layer_file(std::uint64_t id, std::uint32_t index) const;

  mutable std::shared_mutex mutex_;
  std::filesystem::path dir_;
  std::map<std::uint64_t, ModelRecord> records_;
  std::map<std::string, BaseDescriptor> bases_;
  std::uint64_t next_id_ = 1;
};

}  // namespace taskdb
