#include <doctest.h>

#include <functional>

#include "naive_interpreter.hpp"
#include "taskdb/engine.hpp"
#include "taskdb/executor.hpp"
#include "taskdb/rng.hpp"
#include "test_util.hpp"

using namespace taskdb;

namespace {

// Small end-to-end fixture: two joinable tables, three stub-backed tasks.
std::unique_ptr<Engine> make_fixture(const std::filesystem::path& dir,
                                     std::uint64_t rows = 60) {
  EngineConfig config;
  config.data_dir = dir;
  auto engine = std::make_unique<Engine>(std::move(config));
  Rng rng(7);

  RowBatch product;
  product.add("id", ColumnType::Num);
  product.add("img", ColumnType::Text);
  auto& pid = product.columns[0];
  auto& pimg = product.columns[1];
  for (std::uint64_t r = 0; r < rows / 3; ++r) {
    pid.nums.push_back(double(r));
    pimg.texts.push_back("product_img_" + std::to_string(r % 7));
  }
  product.row_count = rows / 3;
  engine->tables().put("product", std::move(product));

  RowBatch review;
  review.add("pid", ColumnType::Num);
  review.add("uid", ColumnType::Num);
  review.add("comment", ColumnType::Text);
  review.add("score", ColumnType::Num);
  review.add("vec", ColumnType::Tensor);
  auto& rpid = review.columns[0];
  auto& ruid = review.columns[1];
  auto& rcomment = review.columns[2];
  auto& rscore = review.columns[3];
  auto& rvec = review.columns[4];
  for (std::uint64_t r = 0; r < rows; ++r) {
    rpid.nums.push_back(double(r % (rows / 3)));
    ruid.nums.push_back(double(r % 5));
    rcomment.texts.push_back("comment_" + std::to_string(r % 11));
    rscore.nums.push_back(rng.uniform01() * 5.0);
    std::vector<double> v(4);
    for (double& x : v) x = rng.uniform01();
    rvec.tensors.push_back(Mvec({4}, std::move(v)));
  }
  review.row_count = rows;
  engine->tables().put("review", std::move(review));

  std::size_t feat_dim = engine->config().extractor_dim;
  auto add_model = [&](const std::string& name, const ModelProfile& profile,
                       std::size_t dim, double scale, double shift) {
    StubModel stub = StubModel::scaler(0, profile, dim, scale, shift);
    BaseDescriptor arch = StubModel::architecture(name + "-arch", stub.layers());
    return engine->repo().register_blob_model(name, "1.0", stub.serialize(arch),
                                              profile);
  };
  auto senti = add_model("senti", text_model_profile(), feat_dim, 2.0, 0.1);
  auto imgrec = add_model("imgrec", image_model_profile(), feat_dim, 1.0, 0.0);
  auto vecnet = add_model("vecnet", series_model_profile(), 4, -1.0, 0.5);

  engine->create_task({"senti_score", TaskInputType::Text, {}, TaskKind::Regression},
                      nullptr, senti);
  engine->create_task({"img_label",
                       TaskInputType::Image,
                       {"phone", "laptop", "camera"},
                       TaskKind::Classification},
                      nullptr, imgrec);
  engine->create_task({"vec_score", TaskInputType::Tensor, {}, TaskKind::Regression},
                      nullptr, vecnet);
  return engine;
}

bool same_results(Engine& engine, const std::string& sql, const QueryOptions& opts) {
  naive::Interpreter oracle(engine);
  naive::ResultSet expected = oracle.run(sql);
  QueryResult got = engine.query(sql, opts);
  naive::ResultSet actual = naive::from_rowbatch(got.rows);
  if (expected.rows.size() != actual.rows.size()) return false;
  return expected.rows == actual.rows;
}

}  // namespace

TEST_CASE("window accumulate / infer / cleanup three-phase contract") {
  StubModel identity = StubModel::identity(1, {1e6, 1e4}, 2);
  DeviceProfile cpu = DeviceProfile::default_cpu();

  WindowState state;
  state.batch_size = 3;
  CHECK_FALSE(window_accumulate(state, Mvec({2}, {1, 2}), 0));
  CHECK_FALSE(window_accumulate(state, Mvec({2}, {3, 4}), 1));
  CHECK(window_accumulate(state, Mvec({2}, {5, 6}), 2));  // filled on third push

  window_infer(state, identity, cpu);
  auto emitted = window_cleanup(state);
  REQUIRE(emitted.size() == 3);
  CHECK(emitted[0].first == 0);
  CHECK(emitted[2].second.bit_equal(Mvec({2}, {5, 6})));
  CHECK(state.pending.empty());   // raw rows released
  CHECK(state.results.empty());

  // batch_size 1 degenerates to per-row emission.
  WindowState unit;
  unit.batch_size = 1;
  CHECK(window_accumulate(unit, Mvec({1}, {9}), 0));

  // 7 rows at batch 3 -> batches of 3, 3, 1 with an end-of-stream flush.
  WindowState stream;
  stream.batch_size = 3;
  std::vector<std::size_t> batch_sizes;
  for (std::size_t r = 0; r < 7; ++r) {
    if (window_accumulate(stream, Mvec({1}, {double(r)}), r)) {
      batch_sizes.push_back(stream.pending.size());
      StubModel id1 = StubModel::identity(1, {1e6, 1e4}, 1);
      window_infer(stream, id1, cpu);
      window_cleanup(stream);
    }
  }
  if (!stream.pending.empty()) {
    batch_sizes.push_back(stream.pending.size());
    StubModel id1 = StubModel::identity(1, {1e6, 1e4}, 1);
    window_infer(stream, id1, cpu);
    auto rest = window_cleanup(stream);
    CHECK(rest.size() == 1);
  }
  CHECK(batch_sizes == std::vector<std::size_t>{3, 3, 1});
}

TEST_CASE("stacked batch tensor carries a leading batch dimension") {
  std::vector<Mvec> rows = {Mvec({2, 2}, {1, 2, 3, 4}), Mvec({2, 2}, {5, 6, 7, 8}),
                            Mvec({2, 2}, {9, 10, 11, 12})};
  Mvec stacked = stack_batch(rows, {0, 1, 2});
  CHECK(stacked.shape() == std::vector<std::uint64_t>{3, 2, 2});
  CHECK(stacked.at({2, 1, 1}) == 12.0);

  std::vector<Mvec> mixed = {Mvec({2}, {1, 2}), Mvec({3}, {1, 2, 3})};
  try {
    stack_batch(mixed, {10, 11});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
    CHECK(std::string(e.what()).find("11") != std::string::npos);  // offending row
  }
}

TEST_CASE("embedding cache contract: hits, LRU eviction, extractor keying") {
  HashingExtractor ex(8);
  EmbeddingCache cache(16);

  Mvec a = embed_or_fetch(&cache, ex, "input-a");
  CHECK(ex.invocations() == 1);
  Mvec a2 = embed_or_fetch(&cache, ex, "input-a");
  CHECK(ex.invocations() == 1);  // zero extractor invocations on hit
  CHECK(a2.bit_equal(a));
  CHECK(cache.hits() == 1);

  // Capacity 1: two distinct inputs then the first again -> 3 computes.
  HashingExtractor ex1(8);
  EmbeddingCache tiny(1);
  embed_or_fetch(&tiny, ex1, "x");
  embed_or_fetch(&tiny, ex1, "y");
  embed_or_fetch(&tiny, ex1, "x");
  CHECK(ex1.invocations() == 3);

  // Different extractors never share entries.
  HashingExtractor ex8(8);
  PrecomputedExtractor pre("precomputed", {{"x", Mvec({2}, {1, 2})}});
  EmbeddingCache shared(16);
  embed_or_fetch(&shared, ex8, "x");
  embed_or_fetch(&shared, pre, "x");
  CHECK(shared.size() == 2);
}

TEST_CASE("relational queries match the naive interpreter") {
  TempDir dir("exec_rel");
  auto engine = make_fixture(dir.path());
  QueryOptions opts;
  CHECK(same_results(*engine, "SELECT * FROM review", opts));
  CHECK(same_results(*engine, "SELECT uid, score FROM review WHERE uid = 2", opts));
  CHECK(same_results(*engine,
                     "SELECT R.uid, P.img FROM review AS R INNER JOIN product AS P "
                     "ON R.pid = P.id WHERE R.score >= 1.5",
                     opts));
  CHECK(same_results(*engine,
                     "SELECT uid, COUNT(*), AVG(score) FROM review GROUP BY uid",
                     opts));
  CHECK(same_results(*engine, "SELECT SUM(score) FROM review", opts));
}

TEST_CASE("predict queries match the naive interpreter") {
  TempDir dir("exec_pred");
  auto engine = make_fixture(dir.path());
  QueryOptions opts;
  CHECK(same_results(*engine, "SELECT senti_score(comment) FROM review", opts));
  CHECK(same_results(*engine, "SELECT vec_score(vec) FROM review", opts));
  CHECK(same_results(*engine,
                     "SELECT uid, img_label(comment) FROM review WHERE uid <= 2",
                     opts));
  CHECK(same_results(*engine,
                     "SELECT uid, AVG(senti_score(comment)) FROM review GROUP BY uid",
                     opts));
  CHECK(same_results(
      *engine,
      "SELECT R.uid, AVG(senti_score(R.comment)) FROM product AS P "
      "INNER JOIN review AS R ON P.id = R.pid "
      "WHERE img_label(P.img) = \"phone\" GROUP BY R.uid",
      opts));
}

TEST_CASE("identity kernel echoes its input column") {
  TempDir dir("exec_identity");
  EngineConfig config;
  config.data_dir = dir.path();
  Engine engine(std::move(config));

  RowBatch t;
  auto& x = t.add("x", ColumnType::Num);
  for (int i = 1; i <= 5; ++i) x.nums.push_back(double(i));
  t.row_count = 5;
  engine.tables().put("t", std::move(t));

  StubModel identity = StubModel::identity(0, series_model_profile(), 1);
  BaseDescriptor arch = StubModel::architecture("id1", identity.layers());
  auto id = engine.repo().register_blob_model("id", "1.0", identity.serialize(arch),
                                              series_model_profile());
  engine.create_task({"echo", TaskInputType::Tensor, {}, TaskKind::Regression},
                     nullptr, id);

  QueryResult result = engine.query("SELECT x, echo(x) FROM t");
  REQUIRE(result.rows.row_count == 5);
  for (std::size_t r = 0; r < 5; ++r)
    CHECK(result.rows.columns[0].nums[r] == result.rows.columns[1].nums[r]);
}

TEST_CASE("batch-size transparency: identical results for every batch size") {
  TempDir dir("exec_batch");
  auto engine = make_fixture(dir.path());
  naive::Interpreter oracle(*engine);
  std::string sql = "SELECT uid, senti_score(comment) FROM review WHERE score >= 1";
  naive::ResultSet expected = oracle.run(sql);
  std::vector<std::uint64_t> metrics_batches;
  for (std::uint64_t b : {1, 4, 8, 16, 32}) {
    QueryOptions opts;
    opts.batch_size = b;
    QueryResult result = engine->query(sql, opts);
    CHECK(naive::from_rowbatch(result.rows).rows == expected.rows);
    metrics_batches.push_back(result.metrics.batches);
  }
  // Only the metrics differ across batch sizes.
  CHECK(metrics_batches.front() > metrics_batches.back());
}

TEST_CASE("cache on/off changes extractor calls, never results") {
  TempDir dir("exec_cache");
  auto engine = make_fixture(dir.path());
  std::string sql = "SELECT img_label(comment) FROM review";

  QueryOptions cold;
  cold.use_cache = false;
  QueryResult no_cache = engine->query(sql, cold);

  QueryOptions warm;
  QueryResult first = engine->query(sql, warm);
  std::uint64_t calls_after_first = engine->extractor().invocations();
  QueryResult second = engine->query(sql, warm);
  std::uint64_t calls_after_second = engine->extractor().invocations();

  CHECK(naive::from_rowbatch(no_cache.rows).rows ==
        naive::from_rowbatch(first.rows).rows);
  CHECK(naive::from_rowbatch(first.rows).rows ==
        naive::from_rowbatch(second.rows).rows);
  CHECK(calls_after_second == calls_after_first);  // warm pass: zero extractions
  CHECK(second.metrics.sim_total < first.metrics.sim_total);
}

TEST_CASE("pipeline results equal sequential execution") {
  TempDir dir("exec_pipe");
  auto engine = make_fixture(dir.path());
  std::vector<std::string> corpus = {
      "SELECT senti_score(comment) FROM review",
      "SELECT uid, vec_score(vec) FROM review WHERE uid != 3",
      "SELECT R.uid, AVG(senti_score(R.comment)) FROM product AS P INNER JOIN "
      "review AS R ON P.id = R.pid GROUP BY R.uid",
      "SELECT uid, COUNT(*) FROM review GROUP BY uid",
  };
  for (const std::string& sql : corpus) {
    QueryOptions seq;
    QueryResult expected = engine->query(sql, seq);
    QueryOptions pipe;
    pipe.pipeline = true;
    pipe.batch_size = 8;
    QueryResult got = engine->query(sql, pipe);
    CHECK(naive::from_rowbatch(got.rows).rows ==
          naive::from_rowbatch(expected.rows).rows);
    CHECK(got.metrics.sim_makespan <= got.metrics.sim_total + 1e-12);
  }
}

TEST_CASE("pipeline stays correct under maximal backpressure") {
  TempDir dir("exec_bp");
  auto engine = make_fixture(dir.path());
  engine->config().queue_capacity = 1;
  engine->config().stream_chunk = 4;
  std::string sql = "SELECT uid, senti_score(comment) FROM review WHERE score >= 0.5";
  QueryOptions seq;
  QueryResult expected = engine->query(sql, seq);
  QueryOptions pipe;
  pipe.pipeline = true;
  pipe.batch_size = 4;
  QueryResult got = engine->query(sql, pipe);
  CHECK(naive::from_rowbatch(got.rows).rows ==
        naive::from_rowbatch(expected.rows).rows);
}

TEST_CASE("single-stage pipeline degenerates to execute") {
  TempDir dir("exec_single");
  auto engine = make_fixture(dir.path());
  std::string sql = "SELECT uid FROM review WHERE uid = 1";
  QueryOptions pipe;
  pipe.pipeline = true;
  QueryResult got = engine->query(sql, pipe);
  QueryResult expected = engine->query(sql, QueryOptions{});
  CHECK(naive::from_rowbatch(got.rows).rows ==
        naive::from_rowbatch(expected.rows).rows);
}

TEST_CASE("shape errors are attributed to the offending node") {
  TempDir dir("exec_shape");
  EngineConfig config;
  config.data_dir = dir.path();
  Engine engine(std::move(config));

  RowBatch t;
  auto& v = t.add("v", ColumnType::Tensor);
  v.tensors.push_back(Mvec({2}, {1, 2}));
  v.tensors.push_back(Mvec({3}, {1, 2, 3}));  // wrong arity for the kernel
  t.row_count = 2;
  engine.tables().put("t", std::move(t));

  StubModel m = StubModel::identity(0, series_model_profile(), 2);
  BaseDescriptor arch = StubModel::architecture("id2", m.layers());
  auto id = engine.repo().register_blob_model("id2", "1.0", m.serialize(arch),
                                              series_model_profile());
  engine.create_task({"echo2", TaskInputType::Tensor, {}, TaskKind::Regression},
                     nullptr, id);
  try {
    engine.query("SELECT echo2(v) FROM t");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
    std::string what = e.what();
    CHECK(what.find("node") != std::string::npos);   // node attribution
    CHECK(what.find("row 1") != std::string::npos);  // offending row index
  }
}
