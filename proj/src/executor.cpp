#include "taskdb/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "exec_internal.hpp"
#include "taskdb/digest.hpp"
#include "taskdb/strutil.hpp"

namespace taskdb {

Mvec HashingExtractor::compute(std::string_view raw) {
  // Expand sha256(raw || counter) into dim doubles in [0, 1).
  std::vector<double> values;
  values.reserve(dim_);
  std::uint32_t counter = 0;
  while (values.size() < dim_) {
    Sha256 h;
    h.update(raw);
    std::uint8_t suffix[4] = {std::uint8_t(counter), std::uint8_t(counter >> 8),
                              std::uint8_t(counter >> 16), std::uint8_t(counter >> 24)};
    h.update(std::span<const std::uint8_t>(suffix, 4));
    auto digest = h.finish();
    for (std::size_t i = 0; i + 8 <= digest.size() && values.size() < dim_; i += 8) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t(digest[i + b]) << (8 * b);
      values.push_back(double(bits >> 11) * 0x1.0p-53);
    }
    ++counter;
  }
  std::uint64_t n = values.size();
  return Mvec({n}, std::move(values));
}

Mvec PrecomputedExtractor::compute(std::string_view raw) {
  auto it = features_.find(std::string(raw));
  if (it == features_.end())
    raise(ErrorCode::ExtractorFailure,
          "no precomputed features for input '" + std::string(raw) + "'");
  return it->second;
}

std::optional<Mvec> EmbeddingCache::get(const std::string& key) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it == index_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  lru_.splice(lru_.begin(), lru_, it->second);
  hits_.fetch_add(1, std::memory_order_relaxed);
  return it->second->value;
}

void EmbeddingCache::put(const std::string& key, Mvec value) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key);
  if (it != index_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front(Entry{key, std::move(value)});
  index_[key] = lru_.begin();
  if (capacity_ > 0 && lru_.size() > capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

void EmbeddingCache::reset_counters() {
  hits_.store(0);
  misses_.store(0);
}

Mvec embed_or_fetch(EmbeddingCache* cache, Extractor& extractor, std::string_view raw) {
  if (!cache) return extractor.extract(raw);
  std::string key = extractor.id() + ":" + Sha256::hex(raw);
  if (auto hit = cache->get(key)) return *hit;
  Mvec value = extractor.extract(raw);
  cache->put(key, value);
  return value;
}

bool window_accumulate(WindowState& state, Mvec row_tensor, std::size_t row_index) {
  state.pending.push_back(std::move(row_tensor));
  state.pending_rows.push_back(row_index);
  return state.filled();
}

Mvec stack_batch(const std::vector<Mvec>& rows,
                 const std::vector<std::size_t>& row_indices) {
  if (rows.empty()) raise(ErrorCode::InvalidArgument, "empty batch");
  const auto& row_shape = rows.front().shape();
  std::vector<double> data;
  data.reserve(rows.size() * rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].shape() != row_shape)
      raise(ErrorCode::ShapeMismatch,
            "row " + std::to_string(row_indices.empty() ? i : row_indices[i]) +
                " has shape " + rows[i].shape_string() + ", batch wants " +
                rows.front().shape_string());
    data.insert(data.end(), rows[i].data().begin(), rows[i].data().end());
  }
  std::vector<std::uint64_t> shape;
  shape.push_back(rows.size());
  shape.insert(shape.end(), row_shape.begin(), row_shape.end());
  return Mvec(std::move(shape), std::move(data));
}

void window_infer(WindowState& state, const StubModel& model,
                  const DeviceProfile& device) {
  if (state.pending.empty()) return;
  // The stacked tensor is the unit handed to the device: [B, row_shape...].
  Mvec batch_tensor = stack_batch(state.pending, state.pending_rows);
  (void)batch_tensor;
  for (std::size_t i = 0; i < state.pending.size(); ++i) {
    if (state.pending[i].size() != model.input_dim())
      raise(ErrorCode::ShapeMismatch,
            "row " + std::to_string(state.pending_rows[i]) + " has " +
                std::to_string(state.pending[i].size()) + " elements, kernel wants " +
                std::to_string(model.input_dim()));
  }
  BatchResult result = run_batch(model, state.pending, device);
  state.results.insert(state.results.end(),
                       std::make_move_iterator(result.outputs.begin()),
                       std::make_move_iterator(result.outputs.end()));
  state.result_rows.insert(state.result_rows.end(), state.pending_rows.begin(),
                           state.pending_rows.end());
}

std::vector<std::pair<std::size_t, Mvec>> window_cleanup(WindowState& state) {
  std::vector<std::pair<std::size_t, Mvec>> out;
  out.reserve(state.results.size());
  for (std::size_t i = 0; i < state.results.size(); ++i)
    out.emplace_back(state.result_rows[i], std::move(state.results[i]));
  state.pending.clear();
  state.pending_rows.clear();
  state.results.clear();
  state.result_rows.clear();
  return out;
}

const DeviceProfile& ExecEnv::device(const std::string& name) const {
  for (const DeviceProfile& d : devices)
    if (d.name == name) return d;
  raise(ErrorCode::NoDevices, "no device named '" + name + "'");
}

const StubModel& ExecEnv::stub(std::uint64_t model_id) const {
  if (!stub_cache) raise(ErrorCode::InvalidArgument, "no stub cache configured");
  auto it = stub_cache->find(model_id);
  if (it == stub_cache->end()) {
    StubModel model = StubModel::from_assembled(repo->load_model(model_id));
    it = stub_cache->emplace(model_id, std::move(model)).first;
  }
  return it->second;
}

RemoteClient& ExecEnv::remote(std::uint64_t model_id) const {
  if (!remote_clients) raise(ErrorCode::InvalidArgument, "no remote client map");
  auto it = remote_clients->find(model_id);
  if (it == remote_clients->end()) {
    ModelRecord rec = repo->get(model_id);
    it = remote_clients
             ->emplace(model_id, std::make_shared<RemoteClient>(rec.api))
             .first;
  }
  return *it->second;
}

RowBatch execute(const PlanDag& g, const std::vector<std::uint32_t>& order,
                 ExecEnv& env, RunMetrics* metrics) {
  detail::NodeEvaluator eval(g, env);
  std::vector<RowBatch> results(g.nodes.size());
  std::vector<bool> done(g.nodes.size(), false);
  RunMetrics local;
  local.mode = "sequential";

  for (std::uint32_t id : order) {
    const OperatorNode& node = g.node(id);
    NodeMetrics m;
    m.node_id = id;
    m.kind = node.kind;
    m.device = node.device_name.value_or("cpu0");

    auto parents = g.parents(id);
    std::vector<const RowBatch*> inputs;
    for (std::uint32_t p : parents) {
      if (!done[p]) raise(ErrorCode::InvalidArgument, "execution order violates deps");
      inputs.push_back(&results[p]);
    }

    RowBatch out;
    switch (node.kind) {
      case NodeKind::SCAN:
        out = eval.scan(node, m);
        break;
      case NodeKind::FILTER:
        out = eval.filter(node, *inputs.at(0), m);
        break;
      case NodeKind::JOIN:
        out = eval.join(node, *inputs.at(0), *inputs.at(1), m);
        break;
      case NodeKind::WINDOW:
        out = *inputs.at(0);  // accumulation happens inside the predict loop
        break;
      case NodeKind::PREDICT:
        out = eval.predict(node, *inputs.at(0), m);
        break;
      case NodeKind::GROUPBY:
      case NodeKind::AGGREGATE:
        out = eval.group(node, *inputs.at(0), m);
        break;
      case NodeKind::PROJECT:
      case NodeKind::OUTPUT:
        out = eval.project(node, *inputs.at(0), m);
        break;
    }
    m.rows_out = out.row_count;
    results[id] = std::move(out);
    done[id] = true;

    if (env.options.realtime && m.sim_seconds > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(m.sim_seconds));

    local.sim_total += m.sim_seconds;
    local.batches += m.batches;
    local.cache_hits += m.cache_hits;
    local.cache_misses += m.cache_misses;
    local.nodes.push_back(std::move(m));
  }

  local.sim_makespan = local.sim_total;
  const OperatorNode& out_node = g.output_node();
  local.rows_out = results[out_node.node_id].row_count;
  if (env.extractor) local.extractor_calls = env.extractor->invocations();
  if (metrics) *metrics = std::move(local);
  return std::move(results[out_node.node_id]);
}

std::string RunMetrics::report(const std::string& format) const {
  std::ostringstream out;
  if (format == "jsonlike") {
    out << "run mode=" << mode << " rows=" << rows_out
        << " sim_total=" << format_double(sim_total)
        << " sim_makespan=" << format_double(sim_makespan) << " batches=" << batches
        << " cache_hits=" << cache_hits << " cache_misses=" << cache_misses
        << " extractor_calls=" << extractor_calls << "\n";
    for (const NodeMetrics& n : nodes)
      out << "node id=" << n.node_id << " kind=" << node_kind_name(n.kind)
          << " device=" << n.device << " sim_seconds=" << format_double(n.sim_seconds)
          << " rows=" << n.rows_out << " batches=" << n.batches
          << " cache_hits=" << n.cache_hits << " cache_misses=" << n.cache_misses
          << "\n";
    return out.str();
  }
  out << "mode: " << mode << "\n";
  out << "rows: " << rows_out << "\n";
  out << "simulated total: " << format_double(sim_total) << " s\n";
  out << "simulated makespan: " << format_double(sim_makespan) << " s\n";
  out << "batches: " << batches << "\n";
  out << "cache: " << cache_hits << " hits / " << cache_misses << " misses\n";
  out << "extractor calls: " << extractor_calls << "\n";
  out << "per-node:\n";
  for (const NodeMetrics& n : nodes) {
    out << "  [" << n.node_id << "] " << node_kind_name(n.kind) << " device=" << n.device
        << " sim=" << format_double(n.sim_seconds) << "s rows=" << n.rows_out;
    if (n.batches) out << " batches=" << n.batches;
    if (n.cache_hits || n.cache_misses)
      out << " cache=" << n.cache_hits << "/" << n.cache_misses;
    out << "\n";
  }
  return out.str();
}

}  // namespace taskdb
