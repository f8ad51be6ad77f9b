#include "taskdb/bench.hpp"

#include <sstream>

#include "taskdb/rng.hpp"
#include "taskdb/strutil.hpp"
#include "taskdb/zoo.hpp"

namespace taskdb {

namespace {

constexpr std::size_t kDistinctMedia = 1000;

RowBatch make_media_table(std::uint64_t rows, Rng& rng) {
  RowBatch t;
  t.add("id", ColumnType::Num);
  t.add("img", ColumnType::Text);
  t.add("comment", ColumnType::Text);
  t.add("region", ColumnType::Text);
  Column& id = t.columns[0];
  Column& img = t.columns[1];
  Column& comment = t.columns[2];
  Column& region = t.columns[3];
  for (std::uint64_t r = 0; r < rows; ++r) {
    id.nums.push_back(double(r));
    img.texts.push_back("img_" + std::to_string(r % kDistinctMedia) + "_" +
                        std::to_string(rng.below(4)));
    comment.texts.push_back("comment_" + std::to_string(r % kDistinctMedia));
    region.texts.push_back(r % 3 == 0 ? "emea" : (r % 3 == 1 ? "apac" : "amer"));
  }
  t.row_count = rows;
  return t;
}

RowBatch make_readings_table(std::uint64_t rows, Rng& rng) {
  RowBatch t;
  t.add("id", ColumnType::Num);
  t.add("series", ColumnType::Tensor);
  t.add("level", ColumnType::Num);
  Column& id = t.columns[0];
  Column& series = t.columns[1];
  Column& level = t.columns[2];
  for (std::uint64_t r = 0; r < rows; ++r) {
    id.nums.push_back(double(r));
    std::vector<double> values(8);
    for (double& v : values) v = rng.uniform01();
    series.tensors.push_back(Mvec({8}, std::move(values)));
    level.nums.push_back(rng.uniform01() * 10.0);
  }
  t.row_count = rows;
  return t;
}

std::uint64_t register_stub(Engine& engine, const std::string& name,
                            const StubModel& stub, const ModelProfile& profile) {
  BaseDescriptor arch = StubModel::architecture(name + "-arch", stub.layers());
  return engine.repo().register_blob_model(name, "1.0", stub.serialize(arch), profile);
}

}  // namespace

std::unique_ptr<Engine> make_bench_engine(const std::filesystem::path& data_dir,
                                          std::uint64_t rows, std::uint64_t seed) {
  EngineConfig config;
  config.data_dir = data_dir;
  config.seed = seed;
  config.cache_capacity = 1 << 15;
  auto engine = std::make_unique<Engine>(std::move(config));

  Rng rng(seed);
  engine->tables().put("media", make_media_table(rows, rng));
  engine->tables().put("readings", make_readings_table(rows, rng));

  std::size_t feat_dim = engine->config().extractor_dim;
  auto series_id = register_stub(
      *engine, "series-net", StubModel::scaler(0, series_model_profile(), 8, 0.5),
      series_model_profile());
  auto text_id = register_stub(
      *engine, "text-net", StubModel::scaler(0, text_model_profile(), feat_dim, 1.0),
      text_model_profile());
  auto image_id = register_stub(
      *engine, "image-net",
      StubModel::scaler(0, image_model_profile(), feat_dim, 2.0),
      image_model_profile());

  TaskSpec series_task{"series_predictor", TaskInputType::Series, {}, TaskKind::Regression};
  TaskSpec text_task{"sentiment_score", TaskInputType::Text, {}, TaskKind::Regression};
  TaskSpec image_task{"image_recognition",
                      TaskInputType::Image,
                      {"phone", "laptop", "camera"},
                      TaskKind::Classification};
  engine->create_task(series_task, nullptr, series_id);
  engine->create_task(text_task, nullptr, text_id);
  engine->create_task(image_task, nullptr, image_id);
  return engine;
}

BenchReport run_bench(const BenchOptions& options) {
  std::filesystem::create_directories(options.out_dir);
  auto engine =
      make_bench_engine(options.out_dir / "bench_data", options.rows, options.seed);
  BenchReport report;
  std::ostringstream summary;

  // --- batch-size sweep (image-profile predict) ---
  {
    // warm the embedding cache so every sweep point pays identical embed time
    QueryOptions warm;
    warm.batch_size = 16;
    engine->query("SELECT image_recognition(img) FROM media", warm);

    std::ostringstream csv;
    csv << "batch,sim_seconds\n";
    summary << "batch sweep (image profile, " << options.rows << " rows):\n";
    for (std::uint64_t b : {4, 8, 16, 32, 64, 128}) {
      QueryOptions opt;
      opt.batch_size = b;
      auto result = engine->query("SELECT image_recognition(img) FROM media", opt);
      report.batch_sweep.push_back({b, result.metrics.sim_total});
      csv << b << "," << format_double(result.metrics.sim_total) << "\n";
      summary << "  B=" << b << " -> " << format_double(result.metrics.sim_total)
              << " s\n";
    }
    write_text_file(options.out_dir / "batch_sweep.csv", csv.str());
  }

  // --- device placement per task archetype ---
  {
    std::ostringstream csv;
    csv << "query,node,device\n";
    summary << "device placement:\n";
    auto record = [&](const std::string& label, const std::string& sql) {
      auto [plan, order] = engine->plan_query(sql);
      for (const OperatorNode& node : plan.nodes) {
        if (node.kind != NodeKind::PREDICT) continue;
        std::string device = node.device_name.value_or("unassigned");
        report.device_placement[label + ":" + node.predict.task_name] = device;
        csv << label << "," << node.predict.task_name << "," << device << "\n";
        summary << "  " << label << " " << node.predict.task_name << " -> " << device
                << "\n";
      }
    };
    record("series", "SELECT series_predictor(series) FROM readings");
    record("image", "SELECT image_recognition(img) FROM media");
    record("multimodal",
           "SELECT sentiment_score(comment), image_recognition(img) FROM media");
    write_text_file(options.out_dir / "device_placement.csv", csv.str());
  }

  // --- vector sharing: cold vs warm cache ---
  {
    auto fresh = make_bench_engine(options.out_dir / "bench_data_cache", options.rows,
                                   options.seed);
    std::uint64_t before = fresh->extractor().invocations();
    auto cold = fresh->query("SELECT sentiment_score(comment) FROM media");
    std::uint64_t after_cold = fresh->extractor().invocations();
    auto warm = fresh->query("SELECT sentiment_score(comment) FROM media");
    std::uint64_t after_warm = fresh->extractor().invocations();

    report.cache_cold_seconds = cold.metrics.sim_total;
    report.cache_warm_seconds = warm.metrics.sim_total;
    report.cache_cold_extractor_calls = after_cold - before;
    report.cache_warm_extractor_calls = after_warm - after_cold;

    std::ostringstream csv;
    csv << "run,sim_seconds,extractor_calls\n";
    csv << "cold," << format_double(report.cache_cold_seconds) << ","
        << report.cache_cold_extractor_calls << "\n";
    csv << "warm," << format_double(report.cache_warm_seconds) << ","
        << report.cache_warm_extractor_calls << "\n";
    write_text_file(options.out_dir / "cache_sweep.csv", csv.str());
    summary << "vector sharing: cold " << format_double(report.cache_cold_seconds)
            << " s / " << report.cache_cold_extractor_calls << " extractor calls, warm "
            << format_double(report.cache_warm_seconds) << " s / "
            << report.cache_warm_extractor_calls << " calls\n";
  }

  // --- storage strategy footprints ---
  {
    ModelRepo storage_repo(options.out_dir / "bench_data_storage");
    StubModel stub = StubModel::scaler(0, series_model_profile(), 64, 1.5);
    BaseDescriptor arch = StubModel::architecture("bench-base", stub.layers());
    storage_repo.register_base(arch);
    std::vector<LayerRecord> layers;
    for (std::size_t i = 0; i < stub.layers().size(); ++i)
      layers.push_back(StubModel::layer_record(stub.layers()[i], std::uint32_t(i)));
    auto v1 = storage_repo.register_decoupled_model("fine1", "1.0", "bench-base",
                                                    layers, series_model_profile());
    auto v2 = storage_repo.register_decoupled_model("fine2", "1.0", "bench-base",
                                                    layers, series_model_profile());
    auto blob = storage_repo.register_blob_model("mono", "1.0", stub.serialize(arch),
                                                 series_model_profile());
    ApiModelSpec api;
    api.endpoint = "https://models.example.com/bench";
    auto api_id = storage_repo.register_api_model("remote", "1.0", api);

    report.storage_bytes["blob"] = storage_repo.storage_footprint(blob);
    report.storage_bytes["decoupled_variant"] = storage_repo.storage_footprint(v2);
    report.storage_bytes["api"] = storage_repo.storage_footprint(api_id);
    (void)v1;

    std::ostringstream csv;
    csv << "kind,bytes\n";
    for (const auto& [kind, bytes] : report.storage_bytes)
      csv << kind << "," << bytes << "\n";
    write_text_file(options.out_dir / "storage_footprint.csv", csv.str());
    summary << "storage bytes: blob=" << report.storage_bytes["blob"]
            << " decoupled_variant=" << report.storage_bytes["decoupled_variant"]
            << " api=" << report.storage_bytes["api"] << "\n";
  }

  report.summary = summary.str();
  write_text_file(options.out_dir / "summary.txt", report.summary);
  return report;
}

}  // namespace taskdb
