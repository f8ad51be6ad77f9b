#include "taskdb/model_repo.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "taskdb/digest.hpp"
#include "taskdb/strutil.hpp"

namespace taskdb {

namespace {

constexpr char kCatalogHeader[] = "taskdb-catalog v1 digest=sha256\n";
constexpr char kLayerMagic[4] = {'M', 'L', 'Y', 'R'};

std::string now_iso8601() {
  using namespace std::chrono;
  auto t = system_clock::to_time_t(system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + i]) << (8 * i);
  return v;
}

bool plausible_url(const std::string& url) {
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos || scheme_end == 0) return false;
  std::string scheme = url.substr(0, scheme_end);
  for (char c : scheme)
    if (!std::isalpha(static_cast<unsigned char>(c))) return false;
  std::string rest = url.substr(scheme_end + 3);
  if (rest.empty()) return false;
  std::string host = rest.substr(0, rest.find_first_of("/:"));
  if (host.empty()) return false;
  for (char c : host)
    if (std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

std::string shape_field(const std::vector<std::uint64_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out.push_back('x');
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::uint64_t> parse_shape_field(const std::string& text) {
  std::vector<std::uint64_t> shape;
  for (const std::string& part : split(text, 'x'))
    shape.push_back(std::stoull(part));
  return shape;
}

}  // namespace

const char* storage_kind_name(StorageKind kind) {
  switch (kind) {
    case StorageKind::Blob: return "blob";
    case StorageKind::Decoupled: return "decoupled";
    case StorageKind::Api: return "api";
  }
  return "?";
}

StorageKind storage_kind_from(const std::string& name) {
  if (name == "blob") return StorageKind::Blob;
  if (name == "decoupled") return StorageKind::Decoupled;
  if (name == "api") return StorageKind::Api;
  raise(ErrorCode::InvalidArgument, "unknown storage kind '" + name + "'");
}

void ApiModelSpec::validate() const {
  if (!plausible_url(endpoint))
    raise(ErrorCode::MalformedEndpoint, "'" + endpoint + "' is not a URL");
  if (expected_latency < 0)
    raise(ErrorCode::InvalidArgument, "expected_latency must be >= 0");
  if (timeout <= 0) raise(ErrorCode::InvalidArgument, "timeout must be > 0");
}

std::string ApiModelSpec::canonical() const {
  std::ostringstream out;
  out << "endpoint=" << encode_field(endpoint)
      << " in=" << encode_field(input_schema)
      << " out=" << encode_field(output_schema)
      << " latency=" << format_double(expected_latency)
      << " auth=" << encode_field(auth_ref) << " quota=" << quota
      << " timeout=" << format_double(timeout) << " retries=" << max_retries;
  return out.str();
}

std::string BaseDescriptor::serialize() const {
  std::ostringstream out;
  out << "base v1 layers=" << layers.size() << "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out << i << ' ' << encode_field(layers[i].name) << ' '
        << shape_field(layers[i].weight_shape);
    if (layers[i].bias_shape) out << ' ' << shape_field(*layers[i].bias_shape);
    out << "\n";
  }
  return out.str();
}

BaseDescriptor BaseDescriptor::parse(const std::string& text, const std::string& name) {
  BaseDescriptor desc;
  desc.name = name;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("base v1", 0) != 0)
    raise(ErrorCode::IoError, "bad base descriptor header for " + name);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto parts = split(line, ' ');
    if (parts.size() < 3)
      raise(ErrorCode::IoError, "bad base descriptor line: " + line);
    BaseLayerSpec spec;
    spec.name = decode_field(parts[1]);
    spec.weight_shape = parse_shape_field(parts[2]);
    if (parts.size() > 3) spec.bias_shape = parse_shape_field(parts[3]);
    desc.layers.push_back(std::move(spec));
  }
  return desc;
}

std::vector<std::uint8_t> encode_layer_section(const LayerRecord& layer) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kLayerMagic, kLayerMagic + 4);
  put_u32(out, std::uint32_t(layer.layer_name.size()));
  out.insert(out.end(), layer.layer_name.begin(), layer.layer_name.end());
  out.push_back(layer.bias ? 1 : 0);
  layer.weight.serialize_into(out);
  if (layer.bias) layer.bias->serialize_into(out);
  return out;
}

LayerRecord decode_layer_section(std::span<const std::uint8_t> bytes,
                                 std::size_t* offset) {
  std::size_t off = *offset;
  if (bytes.size() - off < 9 || std::memcmp(bytes.data() + off, kLayerMagic, 4) != 0)
    raise(ErrorCode::CorruptFrame, "bad layer section header");
  off += 4;
  std::uint32_t name_len = get_u32(bytes, off);
  off += 4;
  if (bytes.size() - off < name_len + 1)
    raise(ErrorCode::CorruptFrame, "truncated layer section");
  LayerRecord layer;
  layer.layer_name.assign(reinterpret_cast<const char*>(bytes.data() + off), name_len);
  off += name_len;
  bool has_bias = bytes[off++] != 0;
  layer.weight = Mvec::read_frame(bytes, &off);
  if (has_bias) layer.bias = Mvec::read_frame(bytes, &off);
  *offset = off;
  return layer;
}

ModelRepo::ModelRepo(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::filesystem::create_directories(dir_ / "blobs");
  std::filesystem::create_directories(dir_ / "layers");
  std::filesystem::create_directories(dir_ / "bases");
  load_catalog();
}

std::filesystem::path ModelRepo::blob_path(std::uint64_t id) const {
  return dir_ / "blobs" / (std::to_string(id) + ".bin");
}

std::filesystem::path ModelRepo::layer_path(std::uint64_t id, std::uint32_t index) const {
  return dir_ / "layers" / std::to_string(id) / (std::to_string(index) + ".mvec");
}

std::filesystem::path ModelRepo::base_path(const std::string& name) const {
  return dir_ / "bases" / (encode_field(name) + ".desc");
}

void ModelRepo::load_catalog() {
  auto idx = dir_ / "catalog.idx";
  if (!std::filesystem::exists(idx)) {
    write_text_file(idx, kCatalogHeader);
    return;
  }
  std::ifstream in(idx);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::size_t sp = line.find(' ');
    std::string tag = line.substr(0, sp);
    auto kv = parse_kv_line(line.substr(sp + 1));
    if (tag == "model") {
      ModelRecord rec;
      rec.model_id = std::stoull(kv.at("id"));
      rec.name = kv.at("name");
      rec.version = kv.at("version");
      rec.storage_kind = storage_kind_from(kv.at("kind"));
      rec.checksum = kv.at("checksum");
      rec.created_at = kv.at("created");
      rec.profile.model_flops = std::stod(kv.at("flops"));
      rec.profile.model_size = std::stod(kv.at("size"));
      if (kv.count("base")) rec.base_model = kv.at("base");
      if (kv.count("layers") && !kv.at("layers").empty()) {
        for (const std::string& n : split(kv.at("layers"), ','))
          rec.layer_names.push_back(decode_field(n));
      }
      if (rec.storage_kind == StorageKind::Api) {
        rec.api.endpoint = kv.at("endpoint");
        rec.api.input_schema = kv.count("in") ? kv.at("in") : "";
        rec.api.output_schema = kv.count("out") ? kv.at("out") : "";
        rec.api.expected_latency = std::stod(kv.at("latency"));
        rec.api.auth_ref = kv.count("auth") ? kv.at("auth") : "";
        rec.api.quota = std::stoull(kv.at("quota"));
        rec.api.timeout = std::stod(kv.at("timeout"));
        rec.api.max_retries = std::uint32_t(std::stoul(kv.at("retries")));
      }
      next_id_ = std::max(next_id_, rec.model_id + 1);
      records_[rec.model_id] = std::move(rec);  // last record wins
    } else if (tag == "base") {
      std::string name = parse_kv_line(line.substr(sp + 1)).at("name");
      bases_[name] = BaseDescriptor::parse(read_text_file(base_path(name)), name);
    }
  }
}

void ModelRepo::append_record(const ModelRecord& rec) {
  std::ostringstream out;
  out << "model id=" << rec.model_id << " kind=" << storage_kind_name(rec.storage_kind)
      << " name=" << encode_field(rec.name) << " version=" << encode_field(rec.version)
      << " checksum=" << rec.checksum
      << " flops=" << format_double(rec.profile.model_flops)
      << " size=" << format_double(rec.profile.model_size)
      << " created=" << rec.created_at;
  if (!rec.base_model.empty()) out << " base=" << encode_field(rec.base_model);
  if (!rec.layer_names.empty()) {
    out << " layers=";
    for (std::size_t i = 0; i < rec.layer_names.size(); ++i) {
      if (i) out << ',';
      out << encode_field(rec.layer_names[i]);
    }
  }
  if (rec.storage_kind == StorageKind::Api) out << ' ' << rec.api.canonical();
  out << "\n";
  append_text_file(dir_ / "catalog.idx", out.str());
}

void ModelRepo::register_base(const BaseDescriptor& base) {
  if (base.name.empty()) raise(ErrorCode::InvalidArgument, "base name empty");
  std::unique_lock lock(mutex_);
  write_text_file(base_path(base.name), base.serialize());
  if (!bases_.count(base.name))
    append_text_file(dir_ / "catalog.idx",
                     "base name=" + encode_field(base.name) + "\n");
  bases_[base.name] = base;
}

bool ModelRepo::has_base(const std::string& name) const {
  std::shared_lock lock(mutex_);
  return bases_.count(name) > 0;
}

BaseDescriptor ModelRepo::load_base(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = bases_.find(name);
  if (it == bases_.end())
    raise(ErrorCode::UnknownBaseModel, "no base model '" + name + "'");
  return it->second;
}

std::uint64_t ModelRepo::register_blob_model(const std::string& name,
                                             const std::string& version,
                                             std::span<const std::uint8_t> payload,
                                             const ModelProfile& profile) {
  if (payload.empty()) raise(ErrorCode::InvalidArgument, "empty blob payload");
  std::unique_lock lock(mutex_);
  for (const auto& [id, rec] : records_)
    if (rec.name == name && rec.version == version)
      raise(ErrorCode::DuplicateNameVersion, name + "@" + version);
  ModelRecord rec;
  rec.model_id = next_id_++;
  rec.name = name;
  rec.version = version;
  rec.storage_kind = StorageKind::Blob;
  rec.profile = profile;
  rec.created_at = now_iso8601();
  rec.checksum = Sha256::hex(payload);
  write_binary_file(blob_path(rec.model_id), payload);
  append_record(rec);
  records_[rec.model_id] = rec;
  return rec.model_id;
}

std::uint64_t ModelRepo::register_decoupled_model(const std::string& name,
                                                  const std::string& version,
                                                  const std::string& base_model,
                                                  const std::vector<LayerRecord>& layers,
                                                  const ModelProfile& profile) {
  std::unique_lock lock(mutex_);
  for (const auto& [id, rec] : records_)
    if (rec.name == name && rec.version == version)
      raise(ErrorCode::DuplicateNameVersion, name + "@" + version);
  auto base_it = bases_.find(base_model);
  if (base_it == bases_.end())
    raise(ErrorCode::UnknownBaseModel, "no base model '" + base_model + "'");
  const BaseDescriptor& base = base_it->second;

  // Indices must form exactly 0..L-1 and cover the whole template.
  std::vector<const LayerRecord*> ordered(layers.size(), nullptr);
  for (const LayerRecord& layer : layers) {
    if (layer.layer_index >= layers.size() || ordered[layer.layer_index])
      raise(ErrorCode::NonContiguousLayers,
            "layer indices must be contiguous from 0, got index " +
                std::to_string(layer.layer_index));
    ordered[layer.layer_index] = &layer;
  }
  if (layers.size() != base.layers.size())
    raise(ErrorCode::NonContiguousLayers,
          "base '" + base_model + "' declares " + std::to_string(base.layers.size()) +
              " layers, got " + std::to_string(layers.size()));
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const LayerRecord& layer = *ordered[i];
    const BaseLayerSpec& spec = base.layers[i];
    if (layer.layer_name != spec.name)
      raise(ErrorCode::UnknownLayer, "layer " + std::to_string(i) + " is '" +
                                         layer.layer_name + "', template wants '" +
                                         spec.name + "'");
    if (layer.weight.shape() != spec.weight_shape)
      raise(ErrorCode::ShapeMismatch,
            "layer '" + layer.layer_name + "' weight shape differs from template");
    if (layer.bias.has_value() != spec.bias_shape.has_value() ||
        (layer.bias && layer.bias->shape() != *spec.bias_shape))
      raise(ErrorCode::ShapeMismatch,
            "layer '" + layer.layer_name + "' bias shape differs from template");
  }

  ModelRecord rec;
  rec.model_id = next_id_++;
  rec.name = name;
  rec.version = version;
  rec.storage_kind = StorageKind::Decoupled;
  rec.base_model = base_model;
  rec.profile = profile;
  rec.created_at = now_iso8601();

  std::filesystem::create_directories(dir_ / "layers" / std::to_string(rec.model_id));
  Sha256 digest;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    auto section = encode_layer_section(*ordered[i]);
    digest.update(section);
    write_binary_file(layer_path(rec.model_id, std::uint32_t(i)), section);
    rec.layer_names.push_back(ordered[i]->layer_name);
  }
  rec.checksum = to_hex(digest.finish());
  append_record(rec);
  records_[rec.model_id] = rec;
  return rec.model_id;
}

std::uint64_t ModelRepo::register_api_model(const std::string& name,
                                            const std::string& version,
                                            const ApiModelSpec& spec,
                                            const ModelProfile& profile) {
  spec.validate();
  std::unique_lock lock(mutex_);
  for (const auto& [id, rec] : records_)
    if (rec.name == name && rec.version == version)
      raise(ErrorCode::DuplicateNameVersion, name + "@" + version);
  ModelRecord rec;
  rec.model_id = next_id_++;
  rec.name = name;
  rec.version = version;
  rec.storage_kind = StorageKind::Api;
  rec.api = spec;
  rec.profile = profile;
  rec.created_at = now_iso8601();
  rec.checksum = Sha256::hex(spec.canonical());
  append_record(rec);
  records_[rec.model_id] = rec;
  return rec.model_id;
}

const ModelRecord& ModelRepo::record_or_throw(std::uint64_t model_id) const {
  auto it = records_.find(model_id);
  if (it == records_.end())
    raise(ErrorCode::UnknownModel, "no model with id " + std::to_string(model_id));
  return it->second;
}

LayerRecord ModelRepo::read_layer_file(std::uint64_t id, std::uint32_t index) const {
  auto path = layer_path(id, index);
  if (!std::filesystem::exists(path))
    raise(ErrorCode::MissingLayer,
          "model " + std::to_string(id) + " layer " + std::to_string(index));
  auto bytes = read_binary_file(path);
  std::size_t offset = 0;
  LayerRecord layer = decode_layer_section(bytes, &offset);
  layer.model_id = id;
  layer.layer_index = index;
  return layer;
}

std::string ModelRepo::compute_checksum(const ModelRecord& rec) const {
  switch (rec.storage_kind) {
    case StorageKind::Blob: {
      auto payload = read_binary_file(blob_path(rec.model_id));
      return Sha256::hex(payload);
    }
    case StorageKind::Decoupled: {
      Sha256 digest;
      for (std::uint32_t i = 0; i < rec.layer_names.size(); ++i) {
        auto path = layer_path(rec.model_id, i);
        if (!std::filesystem::exists(path))
          raise(ErrorCode::MissingLayer, "model " + std::to_string(rec.model_id) +
                                             " layer " + std::to_string(i));
        digest.update(read_binary_file(path));
      }
      return to_hex(digest.finish());
    }
    case StorageKind::Api:
      return Sha256::hex(rec.api.canonical());
  }
  return {};
}

AssembledModel ModelRepo::load_model(std::uint64_t model_id) const {
  std::shared_lock lock(mutex_);
  const ModelRecord& rec = record_or_throw(model_id);
  if (compute_checksum(rec) != rec.checksum)
    raise(ErrorCode::ChecksumMismatch,
          "stored digest does not match payload of model " + std::to_string(model_id));
  AssembledModel out;
  out.record = rec;
  switch (rec.storage_kind) {
    case StorageKind::Blob:
      out.payload = read_binary_file(blob_path(model_id));
      break;
    case StorageKind::Decoupled:
      for (std::uint32_t i = 0; i < rec.layer_names.size(); ++i)
        out.layers.push_back(read_layer_file(model_id, i));
      break;
    case StorageKind::Api:
      break;  // endpoint metadata already lives in the record
  }
  return out;
}

std::vector<LayerRecord> ModelRepo::load_layers(
    std::uint64_t model_id, const std::vector<std::string>& layer_names) const {
  std::shared_lock lock(mutex_);
  const ModelRecord& rec = record_or_throw(model_id);
  if (rec.storage_kind != StorageKind::Decoupled)
    raise(ErrorCode::NotDecoupled, "model " + std::to_string(model_id) + " is " +
                                       storage_kind_name(rec.storage_kind));
  std::vector<LayerRecord> out;
  for (const std::string& want : layer_names) {
    auto it = std::find(rec.layer_names.begin(), rec.layer_names.end(), want);
    if (it == rec.layer_names.end())
      raise(ErrorCode::UnknownLayer, "model " + std::to_string(model_id) +
                                         " has no layer '" + want + "'");
    out.push_back(
        read_layer_file(model_id, std::uint32_t(it - rec.layer_names.begin())));
  }
  return out;
}

std::string ModelRepo::update_layer(std::uint64_t model_id, const LayerRecord& layer) {
  std::unique_lock lock(mutex_);
  auto it = records_.find(model_id);
  if (it == records_.end())
    raise(ErrorCode::UnknownModel, "no model with id " + std::to_string(model_id));
  ModelRecord& rec = it->second;
  if (rec.storage_kind != StorageKind::Decoupled)
    raise(ErrorCode::NotDecoupled, "model " + std::to_string(model_id) + " is " +
                                       storage_kind_name(rec.storage_kind));
  if (layer.layer_index >= rec.layer_names.size())
    raise(ErrorCode::UnknownLayer,
          "layer index " + std::to_string(layer.layer_index) + " out of range");
  const BaseDescriptor& base = bases_.at(rec.base_model);
  const BaseLayerSpec& spec = base.layers[layer.layer_index];
  if (layer.layer_name != spec.name)
    raise(ErrorCode::UnknownLayer, "layer " + std::to_string(layer.layer_index) +
                                       " is named '" + spec.name + "'");
  if (layer.weight.shape() != spec.weight_shape ||
      layer.bias.has_value() != spec.bias_shape.has_value() ||
      (layer.bias && layer.bias->shape() != *spec.bias_shape))
    raise(ErrorCode::ShapeMismatch,
          "replacement for layer '" + spec.name + "' differs from template shape");

  write_binary_file(layer_path(model_id, layer.layer_index),
                    encode_layer_section(layer));
  rec.checksum = compute_checksum(rec);
  append_record(rec);
  return rec.checksum;
}

bool ModelRepo::verify_checksum(std::uint64_t model_id) const {
  std::shared_lock lock(mutex_);
  const ModelRecord& rec = record_or_throw(model_id);
  try {
    return compute_checksum(rec) == rec.checksum;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingLayer || e.code() == ErrorCode::IoError)
      return false;
    throw;
  }
}

std::vector<ModelRecord> ModelRepo::list_models(
    std::optional<StorageKind> filter) const {
  std::shared_lock lock(mutex_);
  std::vector<ModelRecord> out;
  for (const auto& [id, rec] : records_)
    if (!filter || rec.storage_kind == *filter) out.push_back(rec);
  std::sort(out.begin(), out.end(), [](const ModelRecord& a, const ModelRecord& b) {
    if (a.name != b.name) return a.name < b.name;
    if (a.version != b.version) return a.version < b.version;
    return a.model_id < b.model_id;
  });
  return out;
}

ModelRecord ModelRepo::get(std::uint64_t model_id) const {
  std::shared_lock lock(mutex_);
  return record_or_throw(model_id);
}

std::optional<std::uint64_t> ModelRepo::find(const std::string& name,
                                             const std::string& version) const {
  std::shared_lock lock(mutex_);
  for (const auto& [id, rec] : records_)
    if (rec.name == name && rec.version == version) return id;
  return std::nullopt;
}

std::uint64_t ModelRepo::storage_footprint(std::uint64_t model_id) const {
  std::shared_lock lock(mutex_);
  const ModelRecord& rec = record_or_throw(model_id);
  switch (rec.storage_kind) {
    case StorageKind::Blob:
      return std::filesystem::file_size(blob_path(model_id));
    case StorageKind::Decoupled: {
      std::uint64_t total = 0;
      for (std::uint32_t i = 0; i < rec.layer_names.size(); ++i)
        total += std::filesystem::file_size(layer_path(model_id, i));
      return total;
    }
    case StorageKind::Api:
      return rec.api.canonical().size();
  }
  return 0;
}

}  // namespace taskdb
