#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskdb/cost_model.hpp"
#include "taskdb/model_repo.hpp"
#include "taskdb/parser.hpp"
#include "taskdb/selection.hpp"
#include "taskdb/task.hpp"

namespace taskdb {

enum class NodeKind {
  SCAN,
  FILTER,
  JOIN,
  AGGREGATE,
  GROUPBY,
  WINDOW,
  PREDICT,
  PROJECT,
  OUTPUT
};
const char* node_kind_name(NodeKind kind);

enum class EdgeLabel { Unlabeled, DataDependency, ControlDependency };
const char* edge_label_name(EdgeLabel label);

struct AggItem {
  AggFn fn = AggFn::Count;
  bool star = false;
  std::string input_column;  // canonical column the aggregate reads
  std::string display;       // output column name
};

struct PredictParams {
  std::string task_name;
  std::uint64_t model_id = 0;
  TaskInputType input_type = TaskInputType::Tensor;
  TaskKind output_kind = TaskKind::Regression;
  std::vector<std::string> labels;   // classification outputs
  std::string input_column;          // canonical
  std::string output_column;         // display name for the produced column
  bool remote = false;               // api-registered model
  ModelProfile profile;
};

struct OperatorNode {
  std::uint32_t node_id = 0;
  NodeKind kind = NodeKind::SCAN;

  // SCAN
  std::string table;
  std::string alias;
  // FILTER: lhs column vs literal (predicate predicts are hoisted upstream)
  std::string filter_column;
  CmpOp filter_op = CmpOp::Eq;
  Literal filter_value;
  // JOIN
  std::string join_left;
  std::string join_right;
  // GROUPBY / AGGREGATE
  std::vector<std::string> group_columns;
  std::vector<AggItem> aggregates;
  // PREDICT
  PredictParams predict;
  // PROJECT / OUTPUT: (canonical source, display name) pairs
  std::vector<std::pair<std::string, std::string>> projection;

  // physical annotations
  std::optional<std::string> device_name;
  DeviceKind device_kind = DeviceKind::CPU;
  std::optional<std::uint64_t> batch_size;  // PREDICT / WINDOW only
  double est_rows = 0.0;
  std::optional<CostEstimate> est_cost;

  // schema bookkeeping used by dependency labeling and execution
  std::vector<std::string> output_columns;
  std::vector<std::string> consumed_columns;
};

struct PlanEdge {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  EdgeLabel label = EdgeLabel::Unlabeled;
};

/// Operator DAG. Structurally permits cycles so that dependency discovery
/// can detect and reject them.
struct PlanDag {
  std::vector<OperatorNode> nodes;
  std::vector<PlanEdge> edges;

  OperatorNode& add_node(NodeKind kind);
  void add_edge(std::uint32_t from, std::uint32_t to);
  /// Pure sequencing edge (e.g. a guard); carries no tuples.
  void add_control_edge(std::uint32_t from, std::uint32_t to);

  OperatorNode& node(std::uint32_t id) { return nodes[id]; }
  const OperatorNode& node(std::uint32_t id) const { return nodes[id]; }
  std::vector<std::uint32_t> parents(std::uint32_t id) const;
  std::vector<std::uint32_t> children(std::uint32_t id) const;
  const OperatorNode& output_node() const;
};

/// Catalog view the planner needs to resolve tables and task calls.
struct PlannerContext {
  const ModelRepo* repo = nullptr;
  const TableCatalog* tables = nullptr;
  /// task name -> (spec, bound model id); empty optional when unknown.
  std::function<std::optional<std::pair<TaskSpec, std::uint64_t>>(const std::string&)>
      lookup_task;
};

/// Lowers a bound SELECT into an operator DAG. Predicts embedded in WHERE
/// predicates are hoisted into PREDICT nodes feeding FILTERs.
PlanDag build_dag(const SelectQuery& query, const PlannerContext& ctx);

/// Dependency discovery: builds the per-node dependency map, labels every
/// edge as data or control dependency, and returns a DFS-based topological
/// execution order (children visited in ascending node id, so the order is
/// canonical). Raises CycleDetected listing the offending nodes.
std::vector<std::uint32_t> discover_dependencies(PlanDag& g);

/// Exact scan counts, fixed 0.5 selectivity after filters; annotates
/// est_rows on every node (table row counts keyed by table name).
void estimate_cardinalities(PlanDag& g,
                            const std::map<std::string, std::uint64_t>& table_rows,
                            double filter_selectivity = 0.5);

/// Assigns devices: PREDICT nodes get the cost-model argmin over eligible
/// devices (api models run on REMOTE, local kernels on CPU/GPU); relational
/// operators pin to the first CPU device.
void place_operators(PlanDag& g, const std::vector<DeviceProfile>& devices);

/// Batch-size objective: F(B) = ceil(nrows/B) * (setup_cost + B*per_row)
/// subject to B*row_bytes <= mem_budget; ties prefer the smaller B.
std::uint64_t choose_batch_size(const ModelProfile& profile,
                                const DeviceProfile& device, std::uint64_t nrows,
                                std::uint64_t row_bytes, std::uint64_t mem_budget,
                                const std::vector<std::uint64_t>& candidates);

/// Inserts a WINDOW accumulation stage in front of every PREDICT node and
/// copies the predict's batch size onto it.
void attach_windows(PlanDag& g);

/// Deterministic text rendering of nodes (in execution order), edges, device
/// assignments, batch sizes, and per-node cost estimates.
std::string explain_plan(const PlanDag& g, const std::vector<std::uint32_t>& order);

struct TaskBinding {
  TaskSpec spec;
  std::uint64_t model_id = 0;
  std::string origin;  // "selected" or "override"
};

/// Persistent task registry (tasks.idx in the data directory).
class TaskRegistry {
 public:
  explicit TaskRegistry(std::filesystem::path file);

  /// Binds a task to a model: explicit override, or argmax transfer score
  /// from the selector bundle + task features.
  TaskBinding register_task(const TaskSpec& spec,
                            const SelectorBundle* selector,
                            const TaskFeatures* features,
                            std::optional<std::uint64_t> override_model);

  std::optional<TaskBinding> find(const std::string& name) const;
  std::vector<TaskBinding> list() const;
  /// Re-runs selection for an existing task and rebinds it.
  TaskBinding reselect(const std::string& name, const SelectorBundle& selector,
                       const TaskFeatures& features);

 private:
  void persist(const TaskBinding& binding);
  void load();

  std::filesystem::path file_;
  std::map<std::string, TaskBinding> tasks_;
};

}  // namespace taskdb
