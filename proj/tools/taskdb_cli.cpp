#include <CLI11.hpp>

#include <iostream>

#include "taskdb/bench.hpp"
#include "taskdb/engine.hpp"
#include "taskdb/strutil.hpp"

using namespace taskdb;

namespace {

struct GlobalOpts {
  std::string config_file;
  std::string data_dir;
  std::string format = "table";
};

EngineConfig load_config(const GlobalOpts& opts) {
  std::optional<std::filesystem::path> file;
  if (!opts.config_file.empty()) file = opts.config_file;
  EngineConfig config = EngineConfig::load(file);
  if (!opts.data_dir.empty()) config.data_dir = opts.data_dir;
  return config;
}

void print_models(const std::vector<ModelRecord>& models, const std::string& format) {
  if (format == "csv") {
    std::cout << "id,name,version,kind,checksum,flops,size,created\n";
    for (const ModelRecord& m : models)
      std::cout << m.model_id << "," << m.name << "," << m.version << ","
                << storage_kind_name(m.storage_kind) << "," << m.checksum << ","
                << format_double(m.profile.model_flops) << ","
                << format_double(m.profile.model_size) << "," << m.created_at << "\n";
    return;
  }
  if (format == "jsonlike") {
    for (const ModelRecord& m : models)
      std::cout << "model id=" << m.model_id << " name=" << encode_field(m.name)
                << " version=" << encode_field(m.version)
                << " kind=" << storage_kind_name(m.storage_kind)
                << " checksum=" << m.checksum << "\n";
    return;
  }
  for (const ModelRecord& m : models)
    std::cout << "[" << m.model_id << "] " << m.name << "@" << m.version << " ("
              << storage_kind_name(m.storage_kind) << ") checksum=" << m.checksum.substr(0, 12)
              << "... flops/row=" << format_double(m.profile.model_flops)
              << " bytes=" << format_double(m.profile.model_size) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"taskdb — task-centric batch inference engine"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts global;
  app.add_option("--config", global.config_file, "flat key=value config file");
  app.add_option("--data-dir", global.data_dir, "engine data directory");
  app.add_option("--format", global.format, "output format: table|csv|jsonlike")
      ->check(CLI::IsMember({"table", "csv", "jsonlike"}));

  // ---- import ----
  auto* import_cmd = app.add_subcommand("import", "register a model in the catalog");
  std::string imp_kind, imp_name, imp_version = "1.0", imp_file, imp_base, imp_layers_dir;
  std::string imp_endpoint, imp_auth;
  double imp_flops = 0.0, imp_size = 0.0, imp_latency = 0.1, imp_timeout = 5.0;
  std::uint64_t imp_quota = 1'000'000;
  std::uint32_t imp_retries = 2;
  import_cmd->add_option("--kind", imp_kind, "blob|decoupled|api|base")->required();
  import_cmd->add_option("--name", imp_name)->required();
  import_cmd->add_option("--version", imp_version);
  import_cmd->add_option("--file", imp_file, "payload (blob) or descriptor (base)");
  import_cmd->add_option("--base", imp_base, "base model name (decoupled)");
  import_cmd->add_option("--layers", imp_layers_dir,
                         "directory of <index>.layer files (decoupled)");
  import_cmd->add_option("--endpoint", imp_endpoint, "endpoint URL (api)");
  import_cmd->add_option("--auth", imp_auth, "credential key (api)");
  import_cmd->add_option("--latency", imp_latency, "expected latency seconds (api)");
  import_cmd->add_option("--timeout", imp_timeout, "per-attempt timeout seconds (api)");
  import_cmd->add_option("--quota", imp_quota, "max requests per window (api)");
  import_cmd->add_option("--retries", imp_retries, "max retries (api)");
  import_cmd->add_option("--flops", imp_flops, "model flops per row");
  import_cmd->add_option("--size", imp_size, "model size in bytes");

  // ---- create-task ----
  auto* task_cmd = app.add_subcommand("create-task", "register an inference task");
  std::string task_ddl, task_features;
  std::uint64_t task_model = 0;
  task_cmd->add_option("--ddl", task_ddl, "CREATE TASK ... statement")->required();
  task_cmd->add_option("--features", task_features,
                       "task feature vector file (.mvec) for selection");
  task_cmd->add_option("--model", task_model, "explicit model id override");

  // ---- train-selector ----
  auto* train_cmd = app.add_subcommand("train-selector",
                                       "factorize the transfer matrix");
  std::string train_matrix, train_features_dir;
  std::size_t train_k = 0, train_iters = 2000;
  double train_tol = 1e-9;
  train_cmd->add_option("--matrix", train_matrix, "transfer matrix CSV")->required();
  train_cmd->add_option("--features-dir", train_features_dir,
                        "directory of <task_id>.mvec feature files")->required();
  train_cmd->add_option("--k", train_k, "latent dimension (default min(8, min(M,N)))");
  train_cmd->add_option("--iters", train_iters, "max sweeps");
  train_cmd->add_option("--tol", train_tol, "relative-error improvement tolerance");

  // ---- select-model ----
  auto* select_cmd = app.add_subcommand("select-model",
                                        "rank models for a task's features");
  std::string select_features, select_task;
  select_cmd->add_option("--features", select_features, "feature vector file (.mvec)");
  select_cmd->add_option("--task", select_task,
                         "re-run selection for a registered task");

  // ---- query / explain ----
  auto* query_cmd = app.add_subcommand("query", "plan and execute a DSL query");
  std::string query_sql;
  bool query_explain = false, query_metrics = false, query_pipeline = false,
       query_no_cache = false;
  std::uint64_t query_batch = 0;
  query_cmd->add_option("--sql", query_sql, "query text")->required();
  query_cmd->add_flag("--explain", query_explain, "print the plan report");
  query_cmd->add_flag("--metrics", query_metrics, "print the run report");
  query_cmd->add_flag("--pipeline", query_pipeline, "staged pipeline execution");
  query_cmd->add_flag("--no-cache", query_no_cache, "disable the embedding cache");
  query_cmd->add_option("--batch-size", query_batch, "override the chosen batch size");

  auto* explain_cmd = app.add_subcommand("explain", "plan a query without executing");
  std::string explain_sql;
  explain_cmd->add_option("--sql", explain_sql, "query text")->required();

  // ---- bench ----
  auto* bench_cmd = app.add_subcommand("bench", "run the desk-scale benchmark sweeps");
  std::string bench_out = "bench_out";
  std::uint64_t bench_rows = 10000, bench_seed = 42;
  bench_cmd->add_option("--out", bench_out, "output directory");
  bench_cmd->add_option("--rows", bench_rows, "fixture row count");
  bench_cmd->add_option("--seed", bench_seed, "fixture seed");

  // ---- list-models ----
  auto* list_cmd = app.add_subcommand("list-models", "list catalog entries");
  std::string list_kind;
  list_cmd->add_option("--kind", list_kind, "filter: blob|decoupled|api");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage errors exit 2
  }

  try {
    if (bench_cmd->parsed()) {
      BenchOptions opts;
      opts.out_dir = bench_out;
      opts.rows = bench_rows;
      opts.seed = bench_seed;
      BenchReport report = run_bench(opts);
      std::cout << report.summary;
      std::cout << "reports written to " << bench_out << "\n";
      return 0;
    }

    Engine engine(load_config(global));

    if (import_cmd->parsed()) {
      ModelProfile profile{imp_flops, imp_size};
      std::uint64_t id = 0;
      if (imp_kind == "blob") {
        if (imp_file.empty()) throw Error(ErrorCode::InvalidArgument, "--file required");
        auto payload = read_binary_file(imp_file);
        id = engine.repo().register_blob_model(imp_name, imp_version, payload, profile);
      } else if (imp_kind == "base") {
        if (imp_file.empty()) throw Error(ErrorCode::InvalidArgument, "--file required");
        engine.repo().register_base(
            BaseDescriptor::parse(read_text_file(imp_file), imp_name));
        std::cout << "base " << imp_name << " registered\n";
        return 0;
      } else if (imp_kind == "decoupled") {
        if (imp_base.empty() || imp_layers_dir.empty())
          throw Error(ErrorCode::InvalidArgument, "--base and --layers required");
        std::vector<LayerRecord> layers;
        for (std::uint32_t i = 0;; ++i) {
          auto path = std::filesystem::path(imp_layers_dir) /
                      (std::to_string(i) + ".layer");
          if (!std::filesystem::exists(path)) break;
          auto bytes = read_binary_file(path);
          std::size_t off = 0;
          LayerRecord layer = decode_layer_section(bytes, &off);
          layer.layer_index = i;
          layers.push_back(std::move(layer));
        }
        id = engine.repo().register_decoupled_model(imp_name, imp_version, imp_base,
                                                    layers, profile);
      } else if (imp_kind == "api") {
        ApiModelSpec spec;
        spec.endpoint = imp_endpoint;
        spec.auth_ref = imp_auth;
        spec.expected_latency = imp_latency;
        spec.timeout = imp_timeout;
        spec.quota = imp_quota;
        spec.max_retries = imp_retries;
        id = engine.repo().register_api_model(imp_name, imp_version, spec, profile);
      } else {
        std::cerr << "error: unknown --kind '" << imp_kind << "'\n";
        return 2;
      }
      ModelRecord rec = engine.repo().get(id);
      std::cout << "model " << id << " registered checksum=" << rec.checksum << "\n";
      return 0;
    }

    if (task_cmd->parsed()) {
      Statement stmt = parse_statement(task_ddl);
      if (stmt.kind != Statement::Kind::CreateTask)
        throw Error(ErrorCode::SyntaxError, "--ddl must be a CREATE TASK statement");
      std::optional<std::uint64_t> override_model;
      if (task_cmd->count("--model")) override_model = task_model;
      std::optional<TaskFeatures> features;
      if (!task_features.empty())
        features = Engine::load_features_file(task_features, "precomputed");
      TaskBinding binding = engine.create_task(
          stmt.create_task.spec, features ? &*features : nullptr, override_model);
      std::cout << "task " << binding.spec.name << " bound to model "
                << binding.model_id << " (" << binding.origin << ")\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      std::optional<std::size_t> k;
      if (train_cmd->count("--k")) k = train_k;
      TrainSummary summary = engine.train_selector_files(
          train_matrix, train_features_dir, k, train_iters, train_tol);
      std::cout << "selector trained k=" << summary.k
                << " iterations=" << summary.iterations
                << " final_error=" << format_double(summary.final_error)
                << " models=" << summary.models << " tasks=" << summary.tasks << "\n";
      return 0;
    }

    if (select_cmd->parsed()) {
      if (select_features.empty())
        throw Error(ErrorCode::InvalidArgument, "--features required");
      TaskFeatures features =
          Engine::load_features_file(select_features, "precomputed");
      auto ranked = engine.rank_models(features);
      if (!select_task.empty()) {
        TaskBinding binding =
            engine.tasks().reselect(select_task, engine.selector(), features);
        std::cout << "task " << select_task << " rebound to model "
                  << binding.model_id << "\n";
      }
      std::cout << "model_id,score\n";
      for (const auto& [id, score] : ranked)
        std::cout << id << "," << format_double(score) << "\n";
      return 0;
    }

    if (query_cmd->parsed() || explain_cmd->parsed()) {
      QueryOptions opts;
      opts.explain_only = explain_cmd->parsed();
      opts.pipeline = query_pipeline;
      opts.use_cache = !query_no_cache;
      if (query_cmd->parsed() && query_cmd->count("--batch-size"))
        opts.batch_size = query_batch;
      std::string sql = explain_cmd->parsed() ? explain_sql : query_sql;

      Statement stmt = parse_statement(sql);
      if (stmt.kind == Statement::Kind::Explain) opts.explain_only = true;
      if (stmt.kind == Statement::Kind::SelectModel) {
        auto binding = engine.tasks().find(stmt.select_model.task_name);
        if (!binding)
          throw Error(ErrorCode::UnknownTask,
                      "no task '" + stmt.select_model.task_name + "'");
        std::cout << "task " << binding->spec.name << " model " << binding->model_id
                  << " (" << binding->origin << ")\n";
        return 0;
      }

      QueryResult result = engine.query(sql, opts);
      if (opts.explain_only || query_explain) std::cout << result.plan_text;
      if (!opts.explain_only) {
        std::cout << result.format_rows(global.format);
        if (query_metrics)
          std::cout << result.metrics.report(global.format == "jsonlike" ? "jsonlike"
                                                                         : "table");
      }
      return 0;
    }

    if (list_cmd->parsed()) {
      std::optional<StorageKind> filter;
      if (!list_kind.empty()) filter = storage_kind_from(list_kind);
      print_models(engine.repo().list_models(filter), global.format);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
