#include "taskdb/engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "taskdb/strutil.hpp"

extern char** environ;

namespace taskdb {

EngineConfig::EngineConfig() {
  devices = {DeviceProfile::default_cpu(), DeviceProfile::default_gpu(),
             DeviceProfile::default_remote()};
}

namespace {

DeviceProfile* device_by_prefix(EngineConfig& cfg, const std::string& prefix) {
  DeviceKind kind = device_kind_from(prefix);
  for (DeviceProfile& d : cfg.devices)
    if (d.kind == kind) return &d;
  return nullptr;
}

}  // namespace

void EngineConfig::apply_kv(const std::string& raw_key, const std::string& value) {
  std::string key;
  for (char c : raw_key) key.push_back(char(std::tolower(static_cast<unsigned char>(c))));

  if (key == "data_dir") { data_dir = value; return; }
  if (key == "default_k") { default_k = std::stoul(value); return; }
  if (key == "cache_capacity") { cache_capacity = std::stoul(value); return; }
  if (key == "mem_budget") { mem_budget = std::stoull(value); return; }
  if (key == "realtime") { realtime = value == "1" || value == "true"; return; }
  if (key == "seed") { seed = std::stoull(value); return; }
  if (key == "rel_row_cost") { rel_row_cost = std::stod(value); return; }
  if (key == "filter_selectivity") { filter_selectivity = std::stod(value); return; }
  if (key == "queue_capacity") { queue_capacity = std::stoul(value); return; }
  if (key == "stream_chunk") { stream_chunk = std::stoul(value); return; }
  if (key == "extractor_dim") { extractor_dim = std::stoul(value); return; }
  if (key == "extractor_cost") { extractor_cost = std::stod(value); return; }
  if (key == "batch_candidates") {
    batch_candidates.clear();
    for (const std::string& b : split(value, ','))
      batch_candidates.push_back(std::stoull(trim(b)));
    return;
  }

  std::size_t dot = key.find('.');  // device fields: cpu.flops, gpu.latency, ...
  if (dot != std::string::npos) {
    DeviceProfile* d = device_by_prefix(*this, key.substr(0, dot));
    if (!d) raise(ErrorCode::InvalidArgument, "unknown device prefix in '" + key + "'");
    std::string field = key.substr(dot + 1);
    if (field == "flops") d->flops = std::stod(value);
    else if (field == "mem_bw") d->mem_bw = std::stod(value);
    else if (field == "gpu_bw") d->gpu_bw = std::stod(value);
    else if (field == "latency") d->latency = std::stod(value);
    else if (field == "per_row_latency") d->per_row_latency = std::stod(value);
    else if (field == "dispatch") d->dispatch = std::stod(value);
    else raise(ErrorCode::InvalidArgument, "unknown device field '" + field + "'");
    return;
  }
  raise(ErrorCode::InvalidArgument, "unknown config key '" + raw_key + "'");
}

EngineConfig EngineConfig::load(const std::optional<std::filesystem::path>& file) {
  EngineConfig cfg;
  if (file) {
    for (const std::string& line : split(read_text_file(*file), '\n')) {
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        raise(ErrorCode::InvalidArgument, "bad config line: " + t);
      cfg.apply_kv(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
  }
  // TASKDB_CPU_FLOPS=... style environment overrides (dots as underscores).
  for (char** env = environ; env && *env; ++env) {
    std::string entry(*env);
    if (entry.rfind("TASKDB_", 0) != 0) continue;
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(7, eq - 7);
    for (char& c : key) c = char(std::tolower(static_cast<unsigned char>(c)));
    static const char* device_prefixes[] = {"cpu_", "gpu_", "remote_"};
    for (const char* p : device_prefixes)
      if (key.rfind(p, 0) == 0) key[std::string(p).size() - 1] = '.';
    cfg.apply_kv(key, entry.substr(eq + 1));
  }
  return cfg;
}

Engine::Engine(EngineConfig config)
    : config_(std::move(config)),
      repo_(config_.data_dir / "models"),
      tasks_(config_.data_dir / "tasks.idx"),
      cache_(config_.cache_capacity),
      extractor_(std::make_unique<HashingExtractor>(config_.extractor_dim,
                                                    config_.extractor_cost)) {
  tables_.load_dir(config_.data_dir / "tables");
}

TrainSummary Engine::train_selector(const TransferMatrix& V,
                                    const std::vector<TaskFeatures>& features,
                                    std::optional<std::size_t> k,
                                    std::size_t max_iters, double tol) {
  std::size_t dim = std::min(V.values.rows(), V.values.cols());
  std::size_t use_k = std::min(k.value_or(std::min<std::size_t>(config_.default_k, dim)), dim);
  SelectorBundle bundle;
  bundle.space = factorize(V, use_k, max_iters, tol, config_.seed);
  bundle.model_ids = V.model_ids;
  bundle.task_ids = V.task_ids;
  bundle.features = features;
  bundle.seed = config_.seed;
  bundle.save(config_.data_dir / "selector");
  selector_ = std::move(bundle);

  TrainSummary summary;
  summary.k = use_k;
  summary.iterations = selector_->space.iterations;
  summary.final_error = selector_->space.final_error;
  summary.models = V.model_ids.size();
  summary.tasks = V.task_ids.size();
  return summary;
}

TrainSummary Engine::train_selector_files(const std::filesystem::path& matrix_csv,
                                          const std::filesystem::path& features_dir,
                                          std::optional<std::size_t> k,
                                          std::size_t max_iters, double tol) {
  TransferMatrix V = TransferMatrix::from_csv(read_text_file(matrix_csv));
  std::vector<TaskFeatures> features;
  for (const std::string& task : V.task_ids) {
    auto path = features_dir / (task + ".mvec");
    if (!std::filesystem::exists(path))
      raise(ErrorCode::IoError, "missing feature file for task '" + task +
                                    "': " + path.string());
    features.push_back(load_features_file(path, "precomputed"));
  }
  return train_selector(V, features, k, max_iters, tol);
}

bool Engine::has_selector() const {
  if (selector_) return true;
  return std::filesystem::exists(config_.data_dir / "selector" / "meta.txt");
}

const SelectorBundle& Engine::selector() const {
  if (!selector_) {
    auto dir = config_.data_dir / "selector";
    if (!std::filesystem::exists(dir / "meta.txt"))
      raise(ErrorCode::SelectionUnavailable,
            "no trained selector under " + dir.string());
    selector_ = SelectorBundle::load(dir);
  }
  return *selector_;
}

std::vector<std::pair<std::uint64_t, double>> Engine::rank_models(
    const TaskFeatures& features) const {
  const SelectorBundle& bundle = selector();
  auto regressor = fit_regressor(bundle.features, bundle.space.H);
  TaskEmbedding embedding = project_task(*regressor, features);
  auto scores = transfer_scores(bundle.space.W, embedding);
  std::vector<std::pair<std::uint64_t, double>> ranked;
  for (std::size_t i = 0; i < scores.size(); ++i)
    ranked.push_back({bundle.model_ids[i], scores[i]});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

TaskBinding Engine::create_task(const TaskSpec& spec, const TaskFeatures* features,
                                std::optional<std::uint64_t> override_model) {
  const SelectorBundle* bundle = nullptr;
  if (!override_model && has_selector()) bundle = &selector();
  return tasks_.register_task(spec, bundle, features, override_model);
}

TaskFeatures Engine::load_features_file(const std::filesystem::path& path,
                                        const std::string& extractor_id) {
  Mvec frame = Mvec::deserialize(read_binary_file(path));
  if (frame.rank() != 1)
    raise(ErrorCode::DimensionMismatch,
          "feature file " + path.string() + " must hold a rank-1 tensor");
  return TaskFeatures{frame.data(), extractor_id};
}

ExecEnv Engine::make_env(const QueryOptions& options) {
  ExecEnv env;
  env.repo = &repo_;
  env.tables = &tables_;
  env.cache = &cache_;
  env.extractor = extractor_.get();
  env.devices = config_.devices;
  env.stub_cache = &stub_cache_;
  env.remote_clients = &remote_clients_;
  env.options.batch_override = options.batch_size;
  env.options.use_cache = options.use_cache;
  env.options.rel_row_cost = config_.rel_row_cost;
  env.options.queue_capacity = config_.queue_capacity;
  env.options.stream_chunk = config_.stream_chunk;
  env.options.realtime = config_.realtime;
  return env;
}

std::pair<PlanDag, std::vector<std::uint32_t>> Engine::plan_query(
    const std::string& sql, const QueryOptions& options) {
  Statement stmt = parse_statement(sql);
  if (stmt.kind != Statement::Kind::Select && stmt.kind != Statement::Kind::Explain)
    raise(ErrorCode::InvalidArgument, "plan_query expects a SELECT statement");

  BinderContext binder;
  binder.tables = &tables_;
  binder.has_task = [&](const std::string& name) {
    return tasks_.find(name).has_value();
  };
  bind_select(stmt.select, binder);

  PlannerContext ctx;
  ctx.repo = &repo_;
  ctx.tables = &tables_;
  ctx.lookup_task =
      [&](const std::string& name) -> std::optional<std::pair<TaskSpec, std::uint64_t>> {
    auto binding = tasks_.find(name);
    if (!binding) return std::nullopt;
    return std::make_pair(binding->spec, binding->model_id);
  };

  PlanDag g = build_dag(stmt.select, ctx);

  std::map<std::string, std::uint64_t> table_rows;
  for (const std::string& name : tables_.names())
    table_rows[name] = tables_.get(name).row_count;
  estimate_cardinalities(g, table_rows, config_.filter_selectivity);
  place_operators(g, config_.devices);

  for (OperatorNode& node : g.nodes) {
    if (node.kind != NodeKind::PREDICT) continue;
    if (options.batch_size) {
      node.batch_size = *options.batch_size;
      continue;
    }
    const DeviceProfile& device = [&]() -> const DeviceProfile& {
      for (const DeviceProfile& d : config_.devices)
        if (d.name == node.device_name) return d;
      return config_.devices.front();
    }();
    std::uint64_t row_bytes = 8;
    if (node.predict.input_type == TaskInputType::Text ||
        node.predict.input_type == TaskInputType::Image)
      row_bytes = config_.extractor_dim * 8;
    node.batch_size = choose_batch_size(
        node.predict.profile, device, std::uint64_t(std::llround(node.est_rows)),
        row_bytes, config_.mem_budget, config_.batch_candidates);
  }

  attach_windows(g);
  std::vector<std::uint32_t> order = discover_dependencies(g);
  return {std::move(g), std::move(order)};
}

QueryResult Engine::query(const std::string& sql, const QueryOptions& options) {
  auto [g, order] = plan_query(sql, options);
  QueryResult result;
  result.plan_text = explain_plan(g, order);
  if (options.explain_only) return result;

  ExecEnv env = make_env(options);
  if (options.pipeline)
    result.rows = pipeline_run(g, order, env, &result.metrics);
  else
    result.rows = execute(g, order, env, &result.metrics);
  return result;
}

std::string QueryResult::format_rows(const std::string& format) const {
  std::ostringstream out;
  const auto& cols = rows.columns;
  if (format == "csv" || format == "jsonlike") {
    if (format == "csv") {
      for (std::size_t c = 0; c < cols.size(); ++c)
        out << (c ? "," : "") << cols[c].name;
      out << "\n";
      for (std::size_t r = 0; r < rows.row_count; ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c)
          out << (c ? "," : "") << cols[c].repr(r);
        out << "\n";
      }
    } else {
      for (std::size_t r = 0; r < rows.row_count; ++r) {
        out << "row";
        for (std::size_t c = 0; c < cols.size(); ++c)
          out << " " << encode_field(cols[c].name) << "=" << encode_field(cols[c].repr(r));
        out << "\n";
      }
    }
    return out.str();
  }
  // aligned table
  std::vector<std::size_t> widths(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    widths[c] = cols[c].name.size();
    for (std::size_t r = 0; r < rows.row_count; ++r)
      widths[c] = std::max(widths[c], cols[c].repr(r).size());
  }
  auto pad = [&](const std::string& s, std::size_t w) {
    out << s << std::string(w - s.size() + 2, ' ');
  };
  for (std::size_t c = 0; c < cols.size(); ++c) pad(cols[c].name, widths[c]);
  out << "\n";
  for (std::size_t c = 0; c < cols.size(); ++c)
    out << std::string(widths[c], '-') << "  ";
  out << "\n";
  for (std::size_t r = 0; r < rows.row_count; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) pad(cols[c].repr(r), widths[c]);
    out << "\n";
  }
  out << "(" << rows.row_count << " rows)\n";
  return out.str();
}

}  // namespace taskdb
