#include <doctest.h>

#include <functional>
#include <set>

#include "taskdb/backends.hpp"
#include "taskdb/planner.hpp"
#include "taskdb/rng.hpp"
#include "test_util.hpp"

using namespace taskdb;

namespace {

bool throws_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

// Fixture: product/review tables plus three registered stub models+tasks.
struct PlannerFixture {
  TempDir dir{"planner"};
  TableCatalog catalog;
  std::unique_ptr<ModelRepo> repo;
  std::map<std::string, std::pair<TaskSpec, std::uint64_t>> task_map;

  PlannerFixture() {
    RowBatch product;
    product.add("id", ColumnType::Num);
    product.add("img", ColumnType::Text);
    catalog.put("product", std::move(product));
    RowBatch review;
    review.add("pid", ColumnType::Num);
    review.add("uid", ColumnType::Num);
    review.add("comment", ColumnType::Text);
    review.add("img", ColumnType::Text);
    catalog.put("review", std::move(review));
    RowBatch readings;
    readings.add("series", ColumnType::Tensor);
    catalog.put("readings", std::move(readings));

    repo = std::make_unique<ModelRepo>(dir.path());
    auto add = [&](const std::string& name, const ModelProfile& profile,
                   const TaskSpec& spec) {
      StubModel stub = StubModel::scaler(0, profile, 8, 1.0);
      BaseDescriptor arch = StubModel::architecture(name + "-arch", stub.layers());
      auto id = repo->register_blob_model(name, "1.0", stub.serialize(arch), profile);
      task_map[spec.name] = {spec, id};
    };
    add("senti", text_model_profile(),
        {"sentiment_classifier", TaskInputType::Text, {}, TaskKind::Regression});
    add("imgrec", image_model_profile(),
        {"image_recognition",
         TaskInputType::Image,
         {"iPhone 16", "other"},
         TaskKind::Classification});
    add("series", series_model_profile(),
        {"series_predictor", TaskInputType::Series, {}, TaskKind::Regression});
  }

  PlannerContext ctx() {
    PlannerContext c;
    c.repo = repo.get();
    c.tables = &catalog;
    c.lookup_task = [this](const std::string& name)
        -> std::optional<std::pair<TaskSpec, std::uint64_t>> {
      auto it = task_map.find(name);
      if (it == task_map.end()) return std::nullopt;
      return it->second;
    };
    return c;
  }

  BinderContext binder() {
    BinderContext b;
    b.tables = &catalog;
    b.has_task = [this](const std::string& name) { return task_map.count(name) > 0; };
    return b;
  }

  PlanDag plan(const std::string& sql) {
    Statement stmt = parse_statement(sql);
    bind_select(stmt.select, binder());
    auto c = ctx();
    return build_dag(stmt.select, c);
  }
};

std::map<NodeKind, int> kind_counts(const PlanDag& g) {
  std::map<NodeKind, int> counts;
  for (const OperatorNode& n : g.nodes) counts[n.kind]++;
  return counts;
}

// Independent cycle oracle: Kahn's algorithm.
bool has_cycle_kahn(const PlanDag& g) {
  std::vector<int> indegree(g.nodes.size(), 0);
  for (const PlanEdge& e : g.edges) indegree[e.to]++;
  std::vector<std::uint32_t> queue;
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i)
    if (indegree[i] == 0) queue.push_back(i);
  std::size_t seen = 0;
  while (!queue.empty()) {
    std::uint32_t v = queue.back();
    queue.pop_back();
    ++seen;
    for (const PlanEdge& e : g.edges)
      if (e.from == v && --indegree[e.to] == 0) queue.push_back(e.to);
  }
  return seen != g.nodes.size();
}

}  // namespace

TEST_CASE("simple predict query lowers to scan-predict-output") {
  PlannerFixture fx;
  PlanDag g = fx.plan("SELECT sentiment_classifier(comment) FROM review");
  REQUIRE(g.nodes.size() == 3);
  CHECK(g.node(0).kind == NodeKind::SCAN);
  CHECK(g.node(1).kind == NodeKind::PREDICT);
  CHECK(g.node(2).kind == NodeKind::OUTPUT);
  CHECK(g.edges.size() == 2);
}

TEST_CASE("filter-only query lowers to scan-filter-output") {
  PlannerFixture fx;
  PlanDag g = fx.plan("SELECT * FROM review WHERE uid = 7");
  REQUIRE(g.nodes.size() == 3);
  CHECK(g.node(1).kind == NodeKind::FILTER);
  CHECK(g.edges.size() == 2);
}

TEST_CASE("predicate predicts hoist into PREDICT feeding FILTER") {
  PlannerFixture fx;
  PlanDag g = fx.plan(
      "SELECT * FROM review WHERE image_recognition(img) = \"iPhone 16\"");
  auto counts = kind_counts(g);
  CHECK(counts[NodeKind::PREDICT] == 1);
  CHECK(counts[NodeKind::FILTER] == 1);
  // The filter reads the predict's output column.
  for (const OperatorNode& n : g.nodes)
    if (n.kind == NodeKind::FILTER)
      CHECK(n.filter_column == "image_recognition(review.img)");
}

TEST_CASE("table-1 join query produces the expected operator set") {
  PlannerFixture fx;
  PlanDag g = fx.plan(
      "SELECT R.uid, AVG(sentiment_classifier(R.comment)) "
      "FROM product AS P INNER JOIN review AS R ON P.id = R.pid "
      "WHERE image_recognition(P.img) = \"iPhone 16\" "
      "AND image_recognition(R.img) = \"iPhone 16\" "
      "GROUP BY R.uid");
  auto counts = kind_counts(g);
  CHECK(counts[NodeKind::SCAN] == 2);
  CHECK(counts[NodeKind::PREDICT] == 3);  // two for filters, one for the aggregate
  CHECK(counts[NodeKind::FILTER] == 2);
  CHECK(counts[NodeKind::JOIN] == 1);
  CHECK(counts[NodeKind::GROUPBY] == 1);
  CHECK(counts[NodeKind::OUTPUT] == 1);

  // Filters sit below the join (pushed to their table's stream).
  std::vector<std::uint32_t> order = discover_dependencies(g);
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const OperatorNode& n : g.nodes)
    if (n.kind == NodeKind::FILTER)
      for (const OperatorNode& j : g.nodes)
        if (j.kind == NodeKind::JOIN) CHECK(pos[n.node_id] < pos[j.node_id]);
}

TEST_CASE("plain column select produces an explicit PROJECT stage") {
  PlannerFixture fx;
  PlanDag g = fx.plan("SELECT uid, comment FROM review");
  auto counts = kind_counts(g);
  CHECK(counts[NodeKind::PROJECT] == 1);
  CHECK(counts[NodeKind::OUTPUT] == 1);
}

TEST_CASE("execution order respects every edge on the examples") {
  PlannerFixture fx;
  PlanDag g = fx.plan(
      "SELECT image_recognition(img) FROM review WHERE uid = 1");
  std::vector<std::uint32_t> order = discover_dependencies(g);
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const PlanEdge& e : g.edges) CHECK(pos[e.from] < pos[e.to]);
  CHECK(order.size() == g.nodes.size());
}

TEST_CASE("diamond DAG orders source first and sink last") {
  PlanDag g;
  for (int i = 0; i < 4; ++i) g.add_node(NodeKind::SCAN);
  g.add_edge(0, 1);
  g.add_edge(0, 2);
  g.add_edge(1, 3);
  g.add_edge(2, 3);
  std::vector<std::uint32_t> order = discover_dependencies(g);
  CHECK(order.front() == 0);
  CHECK(order.back() == 3);
}

TEST_CASE("cycles are detected with the offending nodes listed") {
  PlanDag g;
  g.add_node(NodeKind::SCAN);
  g.add_node(NodeKind::FILTER);
  g.add_edge(0, 1);
  g.add_edge(1, 0);
  try {
    discover_dependencies(g);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CycleDetected);
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
}

TEST_CASE("edge labeling separates tuple flow from pure sequencing") {
  // SCAN a -> FILTER f (data); SCAN b -> PREDICT p (data);
  // guard edge f -> p carries no tuples -> control dependency.
  PlanDag g;
  OperatorNode& scan_a = g.add_node(NodeKind::SCAN);
  scan_a.output_columns = {"a.flag"};
  OperatorNode& filter = g.add_node(NodeKind::FILTER);
  filter.consumed_columns = {"a.flag"};
  filter.output_columns = {"a.flag"};
  OperatorNode& scan_b = g.add_node(NodeKind::SCAN);
  scan_b.output_columns = {"b.x"};
  OperatorNode& predict = g.add_node(NodeKind::PREDICT);
  predict.consumed_columns = {"b.x"};
  predict.output_columns = {"b.x", "task(b.x)"};
  g.add_edge(0, 1);
  g.add_edge(2, 3);
  g.add_edge(1, 3);  // gate: predict never reads a.flag

  discover_dependencies(g);
  std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeLabel> labels;
  for (const PlanEdge& e : g.edges) labels[{e.from, e.to}] = e.label;
  CHECK(labels[{0, 1}] == EdgeLabel::DataDependency);
  CHECK(labels[{2, 3}] == EdgeLabel::DataDependency);
  CHECK(labels[{1, 3}] == EdgeLabel::ControlDependency);
}

TEST_CASE("random DAGs: order valid, injected cycles detected") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.below(48);
    PlanDag g;
    for (std::size_t i = 0; i < n; ++i) g.add_node(NodeKind::SCAN);
    // Forward edges only: guaranteed acyclic.
    for (std::size_t v = 1; v < n; ++v) {
      std::size_t parents = 1 + rng.below(3);
      for (std::size_t p = 0; p < parents; ++p)
        g.add_edge(std::uint32_t(rng.below(v)), std::uint32_t(v));
    }
    REQUIRE_FALSE(has_cycle_kahn(g));
    std::vector<std::uint32_t> order = discover_dependencies(g);
    std::map<std::uint32_t, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const PlanEdge& e : g.edges) CHECK(pos[e.from] < pos[e.to]);

    // Mutate: reversing one existing edge always closes a cycle.
    const PlanEdge& victim = g.edges[rng.below(g.edges.size())];
    PlanDag bad = g;
    bad.add_edge(victim.to, victim.from);
    REQUIRE(has_cycle_kahn(bad));
    CHECK(throws_code(ErrorCode::CycleDetected, [&] { discover_dependencies(bad); }));
  }
}

TEST_CASE("placement pins relational nodes to CPU and predicts to the argmin") {
  PlannerFixture fx;
  std::vector<DeviceProfile> devices = {DeviceProfile::default_cpu(),
                                        DeviceProfile::default_gpu(),
                                        DeviceProfile::default_remote()};

  PlanDag g = fx.plan("SELECT series_predictor(series) FROM readings");
  for (OperatorNode& n : g.nodes) n.est_rows = 10000;
  place_operators(g, devices);
  for (const OperatorNode& n : g.nodes) {
    if (n.kind == NodeKind::PREDICT)
      CHECK(n.device_kind == DeviceKind::CPU);  // tiny series model stays local
    else if (n.kind != NodeKind::WINDOW)
      CHECK(n.device_kind == DeviceKind::CPU);
  }

  PlanDag img = fx.plan("SELECT image_recognition(img) FROM review");
  for (OperatorNode& n : img.nodes) n.est_rows = 10000;
  place_operators(img, devices);
  for (const OperatorNode& n : img.nodes)
    if (n.kind == NodeKind::PREDICT) CHECK(n.device_kind == DeviceKind::GPU);

  // Mixed multi-modal plan: image -> GPU, lightweight text -> CPU.
  PlanDag mixed = fx.plan(
      "SELECT sentiment_classifier(comment), image_recognition(img) FROM review");
  for (OperatorNode& n : mixed.nodes) n.est_rows = 10000;
  place_operators(mixed, devices);
  std::map<std::string, DeviceKind> assignment;
  for (const OperatorNode& n : mixed.nodes)
    if (n.kind == NodeKind::PREDICT)
      assignment[n.predict.task_name] = n.device_kind;
  CHECK(assignment["sentiment_classifier"] == DeviceKind::CPU);
  CHECK(assignment["image_recognition"] == DeviceKind::GPU);
}

TEST_CASE("placement optimality equals brute force over random cases") {
  Rng rng(5150);
  std::vector<DeviceProfile> devices = {DeviceProfile::default_cpu(),
                                        DeviceProfile::default_gpu()};
  for (int trial = 0; trial < 200; ++trial) {
    ModelProfile m{rng.uniform(1e3, 1e10), rng.uniform(1e3, 1e9)};
    std::uint64_t nrows = rng.below(50000);
    const DeviceProfile& chosen = choose_device(m, devices, nrows);
    double best = std::min(total_cost(m, devices[0], nrows).total,
                           total_cost(m, devices[1], nrows).total);
    CHECK(total_cost(m, chosen, nrows).total == best);
  }
}

TEST_CASE("batch size objective and feasibility") {
  ModelProfile image = image_model_profile();
  DeviceProfile gpu = DeviceProfile::default_gpu();
  std::vector<std::uint64_t> candidates = {1, 4, 8, 16, 32, 64, 128};

  // Default calibration puts the image profile in the paper's 8..32 band.
  std::uint64_t b = choose_batch_size(image, gpu, 10000, 256, 1 << 30, candidates);
  CHECK(b >= 8);
  CHECK(b <= 32);

  // Chosen B minimizes F over feasible candidates (brute force check).
  auto F = [&](std::uint64_t B) {
    double setup = gpu.dispatch;
    double per_row = exec_time(image, gpu, 1);
    return std::ceil(10000.0 / double(B)) * (setup + double(B) * per_row);
  };
  for (std::uint64_t cand : candidates) CHECK(F(b) <= F(cand));

  // Memory cap: rows of 1 MiB, budget 16 MiB -> candidates above 16 dropped.
  std::uint64_t capped =
      choose_batch_size(image, gpu, 10000, 1 << 20, 16u << 20, candidates);
  CHECK(capped <= 16);

  // Budget below one row: nothing fits.
  CHECK(throws_code(ErrorCode::NoFeasibleBatch, [&] {
    choose_batch_size(image, gpu, 10, 1 << 20, 1024, candidates);
  }));

  // Zero setup with positive per-row time: smallest feasible candidate wins.
  DeviceProfile free_dispatch = gpu;
  free_dispatch.dispatch = 0.0;
  CHECK(choose_batch_size(image, free_dispatch, 10000, 8, 1 << 30, candidates) == 1);
}

TEST_CASE("attach_windows inserts an accumulation stage per predict") {
  PlannerFixture fx;
  PlanDag g = fx.plan("SELECT sentiment_classifier(comment) FROM review");
  for (OperatorNode& n : g.nodes)
    if (n.kind == NodeKind::PREDICT) n.batch_size = 16;
  attach_windows(g);
  auto counts = kind_counts(g);
  CHECK(counts[NodeKind::WINDOW] == 1);
  for (const OperatorNode& n : g.nodes) {
    if (n.kind == NodeKind::WINDOW) {
      CHECK(n.batch_size == 16);
      auto children = g.children(n.node_id);
      REQUIRE(children.size() == 1);
      CHECK(g.node(children[0]).kind == NodeKind::PREDICT);
    }
  }
  // Idempotent.
  attach_windows(g);
  CHECK(kind_counts(g)[NodeKind::WINDOW] == 1);

  // Order stays valid with windows attached.
  std::vector<std::uint32_t> order = discover_dependencies(g);
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const PlanEdge& e : g.edges) CHECK(pos[e.from] < pos[e.to]);
}

TEST_CASE("explain output is deterministic and covers every node once") {
  PlannerFixture fx;
  PlanDag g = fx.plan(
      "SELECT image_recognition(img) FROM review WHERE uid >= 2");
  std::vector<std::uint32_t> order = discover_dependencies(g);
  std::string a = explain_plan(g, order);
  std::string b = explain_plan(g, order);
  CHECK(a == b);
  for (const OperatorNode& n : g.nodes) {
    std::string tag = "[" + std::to_string(n.node_id) + "] ";
    std::size_t first = a.find(tag);
    REQUIRE(first != std::string::npos);
    CHECK(a.find(tag, first + 1) == std::string::npos);
  }
  CHECK(a.find("unassigned") != std::string::npos);  // not yet placed

  place_operators(g, {DeviceProfile::default_cpu(), DeviceProfile::default_gpu()});
  std::string placed = explain_plan(g, order);
  CHECK(placed.find("cost=") != std::string::npos);
}

TEST_CASE("task registry binds, persists, and enforces preconditions") {
  TempDir dir("registry");
  auto file = dir.path() / "tasks.idx";
  TaskSpec spec{"senti", TaskInputType::Text, {}, TaskKind::Regression};

  {
    TaskRegistry registry(file);
    CHECK(throws_code(ErrorCode::SelectionUnavailable, [&] {
      registry.register_task(spec, nullptr, nullptr, std::nullopt);
    }));

    TaskBinding bound = registry.register_task(spec, nullptr, nullptr, 42);
    CHECK(bound.model_id == 42);
    CHECK(bound.origin == "override");

    CHECK(throws_code(ErrorCode::DuplicateTask, [&] {
      registry.register_task(spec, nullptr, nullptr, 43);
    }));
  }
  TaskRegistry reloaded(file);
  auto found = reloaded.find("senti");
  REQUIRE(found.has_value());
  CHECK(found->model_id == 42);

  // Selection route: trained bundle picks the argmax model.
  SelectorBundle bundle;
  bundle.model_ids = {10, 20};
  bundle.task_ids = {"t1", "t2"};
  bundle.space.k = 1;
  bundle.space.W = Matrix(2, 1, {0.1, 0.9});
  bundle.space.H = Matrix(2, 1, {1.0, 2.0});
  bundle.features = {{{0.0}, "zoo"}, {{1.0}, "zoo"}};
  TaskFeatures f{{0.9}, "zoo"};
  TaskSpec spec2{"imgrec", TaskInputType::Image, {"a", "b"}, TaskKind::Classification};
  TaskBinding selected = reloaded.register_task(spec2, &bundle, &f, std::nullopt);
  CHECK(selected.model_id == 20);
  CHECK(selected.origin == "selected");
}
