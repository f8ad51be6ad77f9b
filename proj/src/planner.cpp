#include "taskdb/planner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "taskdb/strutil.hpp"

namespace taskdb {

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::SCAN: return "SCAN";
    case NodeKind::FILTER: return "FILTER";
    case NodeKind::JOIN: return "JOIN";
    case NodeKind::AGGREGATE: return "AGGREGATE";
    case NodeKind::GROUPBY: return "GROUPBY";
    case NodeKind::WINDOW: return "WINDOW";
    case NodeKind::PREDICT: return "PREDICT";
    case NodeKind::PROJECT: return "PROJECT";
    case NodeKind::OUTPUT: return "OUTPUT";
  }
  return "?";
}

const char* edge_label_name(EdgeLabel label) {
  switch (label) {
    case EdgeLabel::Unlabeled: return "unlabeled";
    case EdgeLabel::DataDependency: return "data";
    case EdgeLabel::ControlDependency: return "control";
  }
  return "?";
}

OperatorNode& PlanDag::add_node(NodeKind kind) {
  OperatorNode node;
  node.node_id = std::uint32_t(nodes.size());
  node.kind = kind;
  nodes.push_back(std::move(node));
  return nodes.back();
}

void PlanDag::add_edge(std::uint32_t from, std::uint32_t to) {
  edges.push_back({from, to, EdgeLabel::Unlabeled});
}

void PlanDag::add_control_edge(std::uint32_t from, std::uint32_t to) {
  edges.push_back({from, to, EdgeLabel::ControlDependency});
}

std::vector<std::uint32_t> PlanDag::parents(std::uint32_t id) const {
  std::vector<std::uint32_t> out;
  for (const PlanEdge& e : edges)
    if (e.to == id) out.push_back(e.from);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> PlanDag::children(std::uint32_t id) const {
  std::vector<std::uint32_t> out;
  for (const PlanEdge& e : edges)
    if (e.from == id) out.push_back(e.to);
  std::sort(out.begin(), out.end());
  return out;
}

const OperatorNode& PlanDag::output_node() const {
  for (const OperatorNode& n : nodes)
    if (n.kind == NodeKind::OUTPUT) return n;
  raise(ErrorCode::InvalidArgument, "plan has no OUTPUT node");
}

namespace {

// Tip of one tuple stream during construction plus the columns flowing
// through it.
struct Stream {
  std::uint32_t tip = 0;
  std::vector<std::string> columns;
};

bool stream_has(const Stream& s, const std::string& column) {
  return std::find(s.columns.begin(), s.columns.end(), column) != s.columns.end();
}

class DagBuilder {
 public:
  DagBuilder(const SelectQuery& query, const PlannerContext& ctx)
      : query_(query), ctx_(ctx) {}

  PlanDag build() {
    // One stream per table alias; single-column predicates push below joins.
    std::map<std::string, Stream> streams;
    streams[query_.from.alias] = make_scan(query_.from);
    for (const JoinClause& join : query_.joins)
      streams[join.table.alias] = make_scan(join.table);

    // Table columns visible to SELECT *; hoisted predicate predicts flow
    // through the stream but are not user-visible.
    std::vector<std::string> visible;
    visible.insert(visible.end(), streams.at(query_.from.alias).columns.begin(),
                   streams.at(query_.from.alias).columns.end());
    for (const JoinClause& join : query_.joins) {
      const Stream& s = streams.at(join.table.alias);
      visible.insert(visible.end(), s.columns.begin(), s.columns.end());
    }

    for (const Predicate& pred : query_.where) {
      const std::string alias = pred.lhs.kind == ScalarExpr::Kind::Column
                                    ? pred.lhs.column.qualifier
                                    : pred.lhs.task.arg.qualifier;
      apply_predicate(streams.at(alias), pred);
    }

    Stream current = streams.at(query_.from.alias);
    for (const JoinClause& join : query_.joins) {
      const Stream& right = streams.at(join.table.alias);
      OperatorNode& node = g_.add_node(NodeKind::JOIN);
      node.join_left = join.left.canonical;
      node.join_right = join.right.canonical;
      node.consumed_columns = {join.left.canonical, join.right.canonical};
      node.output_columns = current.columns;
      node.output_columns.insert(node.output_columns.end(), right.columns.begin(),
                                 right.columns.end());
      g_.add_edge(current.tip, node.node_id);
      g_.add_edge(right.tip, node.node_id);
      current.tip = node.node_id;
      current.columns = node.output_columns;
    }

    // Predicts named in the select list (directly or inside aggregates).
    for (const SelectItem& item : query_.items) {
      if (item.kind == SelectItem::Kind::Task)
        ensure_predict(current, item.task);
      else if (item.kind == SelectItem::Kind::Aggregate && !item.agg_star &&
               item.agg_arg.kind == ScalarExpr::Kind::Task)
        ensure_predict(current, item.agg_arg.task);
    }

    bool has_aggregates = false;
    for (const SelectItem& item : query_.items)
      if (item.kind == SelectItem::Kind::Aggregate) has_aggregates = true;

    std::vector<std::pair<std::string, std::string>> projection;  // source, display
    if (!query_.group_by.empty() || has_aggregates) {
      current = make_group_stage(current, projection);
    } else if (query_.star) {
      for (const std::string& col : visible) projection.push_back({col, col});
    } else {
      for (const SelectItem& item : query_.items) {
        if (item.kind == SelectItem::Kind::Column)
          projection.push_back({item.column.canonical, item.display()});
        else if (item.kind == SelectItem::Kind::Task)
          projection.push_back({item.task.text(), item.display()});
      }
      // A pure column selection materializes as an explicit PROJECT stage.
      bool all_plain = true;
      for (const SelectItem& item : query_.items)
        if (item.kind != SelectItem::Kind::Column) all_plain = false;
      if (all_plain && !projection.empty()) {
        OperatorNode& project = g_.add_node(NodeKind::PROJECT);
        project.projection = projection;
        for (const auto& [src, display] : projection) {
          project.consumed_columns.push_back(src);
          project.output_columns.push_back(display);
        }
        g_.add_edge(current.tip, project.node_id);
        current.tip = project.node_id;
        current.columns = project.output_columns;
        // OUTPUT then forwards the projected columns by display name.
        for (auto& [src, display] : projection) src = display;
      }
    }

    OperatorNode& output = g_.add_node(NodeKind::OUTPUT);
    output.projection = projection;
    for (const auto& [src, display] : projection) {
      output.consumed_columns.push_back(src);
      output.output_columns.push_back(display);
    }
    g_.add_edge(current.tip, output.node_id);
    return std::move(g_);
  }

 private:
  Stream make_scan(const TableRef& ref) {
    OperatorNode& node = g_.add_node(NodeKind::SCAN);
    node.table = ref.table;
    node.alias = ref.alias;
    const RowBatch& table = ctx_.tables->get(ref.table);
    for (const Column& col : table.columns)
      node.output_columns.push_back(ref.alias + "." + col.name);
    Stream s;
    s.tip = node.node_id;
    s.columns = node.output_columns;
    return s;
  }

  void ensure_predict(Stream& stream, const TaskCall& call) {
    if (stream_has(stream, call.text())) return;  // same call reused
    if (!ctx_.lookup_task)
      raise(ErrorCode::UnknownTask, "no task lookup configured");
    auto task = ctx_.lookup_task(call.task_name);
    if (!task)
      raise(ErrorCode::UnknownTask,
            call.pos.str() + ": unknown task '" + call.task_name + "'");
    const auto& [spec, model_id] = *task;

    OperatorNode& node = g_.add_node(NodeKind::PREDICT);
    node.predict.task_name = call.task_name;
    node.predict.model_id = model_id;
    node.predict.input_type = spec.input_type;
    node.predict.output_kind = spec.task_type;
    node.predict.labels = spec.output_labels;
    node.predict.input_column = call.arg.canonical;
    node.predict.output_column = call.text();
    ModelRecord rec = ctx_.repo->get(model_id);
    node.predict.remote = rec.storage_kind == StorageKind::Api;
    node.predict.profile = rec.profile;
    node.consumed_columns = {call.arg.canonical};
    node.output_columns = stream.columns;
    node.output_columns.push_back(call.text());
    g_.add_edge(stream.tip, node.node_id);
    stream.tip = node.node_id;
    stream.columns = node.output_columns;
  }

  void apply_predicate(Stream& stream, const Predicate& pred) {
    std::string column;
    if (pred.lhs.kind == ScalarExpr::Kind::Task) {
      ensure_predict(stream, pred.lhs.task);
      column = pred.lhs.task.text();
    } else {
      column = pred.lhs.column.canonical;
    }
    OperatorNode& node = g_.add_node(NodeKind::FILTER);
    node.filter_column = column;
    node.filter_op = pred.op;
    node.filter_value = pred.rhs;
    node.consumed_columns = {column};
    node.output_columns = stream.columns;
    g_.add_edge(stream.tip, node.node_id);
    stream.tip = node.node_id;
    stream.columns = node.output_columns;
  }

  Stream make_group_stage(Stream current,
                          std::vector<std::pair<std::string, std::string>>& projection) {
    bool grouped = !query_.group_by.empty();
    OperatorNode& node =
        g_.add_node(grouped ? NodeKind::GROUPBY : NodeKind::AGGREGATE);
    for (const ColumnRef& key : query_.group_by) {
      node.group_columns.push_back(key.canonical);
      node.consumed_columns.push_back(key.canonical);
    }
    for (const SelectItem& item : query_.items) {
      if (item.kind == SelectItem::Kind::Aggregate) {
        AggItem agg;
        agg.fn = item.agg;
        agg.star = item.agg_star;
        if (!item.agg_star) {
          agg.input_column = item.agg_arg.kind == ScalarExpr::Kind::Task
                                 ? item.agg_arg.task.text()
                                 : item.agg_arg.column.canonical;
          node.consumed_columns.push_back(agg.input_column);
        }
        agg.display = item.display();
        node.aggregates.push_back(agg);
        projection.push_back({agg.display, agg.display});
      } else if (item.kind == SelectItem::Kind::Column) {
        // Plain columns must be group keys.
        if (std::find_if(query_.group_by.begin(), query_.group_by.end(),
                         [&](const ColumnRef& key) {
                           return key.canonical == item.column.canonical;
                         }) == query_.group_by.end())
          raise(ErrorCode::SyntaxError,
                item.column.pos.str() + ": column '" + item.column.text() +
                    "' must appear in GROUP BY");
        projection.push_back({item.column.canonical, item.display()});
      } else if (item.kind == SelectItem::Kind::Task) {
        raise(ErrorCode::SyntaxError,
              item.task.pos.str() +
                  ": task calls in a grouped select list must sit inside an aggregate");
      }
    }
    node.output_columns = node.group_columns;
    for (const AggItem& agg : node.aggregates)
      node.output_columns.push_back(agg.display);
    g_.add_edge(current.tip, node.node_id);
    Stream out;
    out.tip = node.node_id;
    out.columns = node.output_columns;
    return out;
  }

  const SelectQuery& query_;
  const PlannerContext& ctx_;
  PlanDag g_;
};

}  // namespace

PlanDag build_dag(const SelectQuery& query, const PlannerContext& ctx) {
  if (!ctx.tables) raise(ErrorCode::InvalidArgument, "planner has no table catalog");
  return DagBuilder(query, ctx).build();
}

std::vector<std::uint32_t> discover_dependencies(PlanDag& g) {
  if (g.nodes.empty())
    raise(ErrorCode::InvalidArgument, "empty plan");

  // Alg-style dependency map D(v) = { u | (u,v) in E }.
  std::vector<std::vector<std::uint32_t>> dependents(g.nodes.size());
  for (const PlanEdge& e : g.edges) {
    if (e.from >= g.nodes.size() || e.to >= g.nodes.size())
      raise(ErrorCode::InvalidArgument, "edge endpoint out of range");
    dependents[e.to].push_back(e.from);
  }

  // Label edges: a dependency is a data dependency when the consumer reads
  // tuples the producer emits; otherwise it is a pure sequencing edge.
  for (PlanEdge& e : g.edges) {
    if (e.label == EdgeLabel::ControlDependency) continue;  // explicit gate
    const OperatorNode& u = g.node(e.from);
    const OperatorNode& v = g.node(e.to);
    bool overlap = false;
    for (const std::string& col : u.output_columns) {
      if (std::find(v.output_columns.begin(), v.output_columns.end(), col) !=
              v.output_columns.end() ||
          std::find(v.consumed_columns.begin(), v.consumed_columns.end(), col) !=
              v.consumed_columns.end()) {
        overlap = true;
        break;
      }
    }
    e.label = overlap ? EdgeLabel::DataDependency : EdgeLabel::ControlDependency;
  }

  // Colored DFS, children in ascending node id: canonical topological order.
  enum Color : std::uint8_t { White, Gray, Black };
  std::vector<Color> color(g.nodes.size(), White);
  std::vector<std::vector<std::uint32_t>> children(g.nodes.size());
  for (const PlanEdge& e : g.edges) children[e.from].push_back(e.to);
  for (auto& c : children) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
  }

  std::vector<std::uint32_t> postorder;
  std::vector<std::uint32_t> stack_nodes;

  std::function<void(std::uint32_t)> visit = [&](std::uint32_t v) {
    color[v] = Gray;
    stack_nodes.push_back(v);
    for (std::uint32_t w : children[v]) {
      if (color[w] == Gray) {
        // Cycle: report the slice of the DFS stack from w onward.
        std::ostringstream msg;
        msg << "cycle: ";
        auto it = std::find(stack_nodes.begin(), stack_nodes.end(), w);
        for (; it != stack_nodes.end(); ++it)
          msg << *it << " -> ";
        msg << w;
        raise(ErrorCode::CycleDetected, msg.str());
      }
      if (color[w] == White) visit(w);
    }
    stack_nodes.pop_back();
    color[v] = Black;
    postorder.push_back(v);
  };

  for (std::uint32_t v = 0; v < g.nodes.size(); ++v)
    if (color[v] == White) visit(v);

  std::vector<std::uint32_t> order(postorder.rbegin(), postorder.rend());
  return order;
}

void estimate_cardinalities(PlanDag& g,
                            const std::map<std::string, std::uint64_t>& table_rows,
                            double filter_selectivity) {
  // Nodes are created producer-before-consumer by the builder, but walk in
  // topological order to be safe with hand-built plans.
  PlanDag copy = g;
  std::vector<std::uint32_t> order = discover_dependencies(copy);
  for (std::uint32_t id : order) {
    OperatorNode& node = g.node(id);
    auto parents = g.parents(id);
    double input_rows = 0.0;
    for (std::uint32_t p : parents) input_rows = std::max(input_rows, g.node(p).est_rows);
    switch (node.kind) {
      case NodeKind::SCAN: {
        auto it = table_rows.find(node.table);
        node.est_rows = it == table_rows.end() ? 0.0 : double(it->second);
        break;
      }
      case NodeKind::FILTER:
        node.est_rows = input_rows * filter_selectivity;
        break;
      case NodeKind::JOIN: {
        // Equi-join heuristic: the larger input bounds the estimate.
        double left = parents.empty() ? 0.0 : g.node(parents[0]).est_rows;
        double right = parents.size() > 1 ? g.node(parents[1]).est_rows : left;
        node.est_rows = std::max(left, right);
        break;
      }
      case NodeKind::AGGREGATE:
        node.est_rows = 1.0;
        break;
      case NodeKind::GROUPBY:
        node.est_rows = std::max(1.0, input_rows / 2.0);
        break;
      default:
        node.est_rows = input_rows;
        break;
    }
  }
}

void place_operators(PlanDag& g, const std::vector<DeviceProfile>& devices) {
  if (devices.empty()) raise(ErrorCode::NoDevices, "no devices configured");
  const DeviceProfile* cpu = nullptr;
  for (const DeviceProfile& d : devices)
    if (d.kind == DeviceKind::CPU) {
      cpu = &d;
      break;
    }
  if (!cpu) raise(ErrorCode::NoDevices, "device list has no CPU");

  std::vector<DeviceProfile> local_devices;
  std::vector<DeviceProfile> remote_devices;
  for (const DeviceProfile& d : devices) {
    if (d.kind == DeviceKind::REMOTE)
      remote_devices.push_back(d);
    else
      local_devices.push_back(d);
  }

  for (OperatorNode& node : g.nodes) {
    if (node.kind == NodeKind::PREDICT) {
      if (node.predict.model_id == 0)
        raise(ErrorCode::MissingProfile,
              "predict node " + std::to_string(node.node_id) + " has no bound model");
      std::uint64_t nrows = std::uint64_t(std::llround(node.est_rows));
      const std::vector<DeviceProfile>& eligible =
          node.predict.remote ? remote_devices : local_devices;
      if (eligible.empty())
        raise(ErrorCode::NoDevices, node.predict.remote
                                        ? "api model needs a REMOTE device profile"
                                        : "no local device for predict node");
      const DeviceProfile& d = choose_device(node.predict.profile, eligible, nrows);
      node.device_name = d.name;
      node.device_kind = d.kind;
      node.est_cost = total_cost(node.predict.profile, d, nrows);
    } else if (node.kind != NodeKind::WINDOW) {
      node.device_name = cpu->name;
      node.device_kind = DeviceKind::CPU;
    }
  }
}

std::uint64_t choose_batch_size(const ModelProfile& profile,
                                const DeviceProfile& device, std::uint64_t nrows,
                                std::uint64_t row_bytes, std::uint64_t mem_budget,
                                const std::vector<std::uint64_t>& candidates) {
  if (candidates.empty())
    raise(ErrorCode::InvalidArgument, "no batch size candidates");
  double setup = device.kind == DeviceKind::REMOTE ? device.latency : device.dispatch;
  double per_row = device.kind == DeviceKind::REMOTE
                       ? device.per_row_latency
                       : exec_time(profile, device, 1);

  std::optional<std::uint64_t> best;
  double best_cost = 0.0;
  for (std::uint64_t b : candidates) {
    if (b == 0) continue;
    if (row_bytes > 0 && b > mem_budget / row_bytes) continue;  // memory cap
    double batches = nrows == 0 ? 0.0 : std::ceil(double(nrows) / double(b));
    double cost = batches * (setup + double(b) * per_row);
    if (!best || cost < best_cost || (cost == best_cost && b < *best)) {
      best = b;
      best_cost = cost;
    }
  }
  if (!best)
    raise(ErrorCode::NoFeasibleBatch,
          "no candidate batch size fits in " + std::to_string(mem_budget) + " bytes");
  return *best;
}

void attach_windows(PlanDag& g) {
  std::vector<std::uint32_t> predicts;
  for (const OperatorNode& node : g.nodes)
    if (node.kind == NodeKind::PREDICT) predicts.push_back(node.node_id);

  for (std::uint32_t pid : predicts) {
    // Skip when already windowed (idempotent).
    bool windowed = false;
    for (std::uint32_t parent : g.parents(pid))
      if (g.node(parent).kind == NodeKind::WINDOW) windowed = true;
    if (windowed) continue;

    OperatorNode& window = g.add_node(NodeKind::WINDOW);
    std::uint32_t wid = window.node_id;
    {
      OperatorNode& predict = g.node(pid);
      window.batch_size = predict.batch_size;
      window.est_rows = predict.est_rows;
      window.consumed_columns = {predict.predict.input_column};
      window.device_name = predict.device_name;
      window.device_kind = predict.device_kind;
    }
    // Rewire every tuple edge into the predict through the window.
    std::vector<std::string> upstream_columns;
    for (PlanEdge& e : g.edges) {
      if (e.to == pid && e.label != EdgeLabel::ControlDependency) {
        const auto& cols = g.node(e.from).output_columns;
        upstream_columns.insert(upstream_columns.end(), cols.begin(), cols.end());
        e.to = wid;
      }
    }
    g.node(wid).output_columns = upstream_columns;  // accumulation passthrough
    g.add_edge(wid, pid);
  }
}

std::string explain_plan(const PlanDag& g, const std::vector<std::uint32_t>& order) {
  std::ostringstream out;
  out << "plan nodes=" << g.nodes.size() << " edges=" << g.edges.size() << "\n";
  for (std::uint32_t id : order) {
    const OperatorNode& n = g.node(id);
    out << "  [" << id << "] " << node_kind_name(n.kind);
    switch (n.kind) {
      case NodeKind::SCAN:
        out << " table=" << n.table << " alias=" << n.alias;
        break;
      case NodeKind::FILTER:
        out << " pred=" << n.filter_column << cmp_op_text(n.filter_op)
            << n.filter_value.display();
        break;
      case NodeKind::JOIN:
        out << " on=" << n.join_left << "=" << n.join_right;
        break;
      case NodeKind::GROUPBY: {
        out << " keys=";
        for (std::size_t i = 0; i < n.group_columns.size(); ++i)
          out << (i ? "," : "") << n.group_columns[i];
        [[fallthrough]];
      }
      case NodeKind::AGGREGATE:
        out << " aggs=";
        for (std::size_t i = 0; i < n.aggregates.size(); ++i)
          out << (i ? "," : "") << n.aggregates[i].display;
        break;
      case NodeKind::WINDOW:
        out << " batch=" << (n.batch_size ? std::to_string(*n.batch_size) : "unset");
        break;
      case NodeKind::PREDICT:
        out << " task=" << n.predict.task_name << " model=" << n.predict.model_id
            << " in=" << n.predict.input_column << " out=" << n.predict.output_column;
        break;
      case NodeKind::PROJECT:
      case NodeKind::OUTPUT:
        out << " cols=";
        for (std::size_t i = 0; i < n.projection.size(); ++i)
          out << (i ? "," : "") << n.projection[i].second;
        break;
    }
    out << " rows~" << std::uint64_t(std::llround(n.est_rows));
    out << " device=" << (n.device_name ? *n.device_name : "unassigned");
    if (n.kind == NodeKind::PREDICT || n.kind == NodeKind::WINDOW)
      out << " batch=" << (n.batch_size ? std::to_string(*n.batch_size) : "unassigned");
    if (n.est_cost)
      out << " cost=" << format_double(n.est_cost->total)
          << "s (exec=" << format_double(n.est_cost->exec_time)
          << " trans=" << format_double(n.est_cost->trans_cost) << ")";
    out << "\n";
  }
  out << "edges:\n";
  for (const PlanEdge& e : g.edges)
    out << "  " << e.from << " -> " << e.to << " [" << edge_label_name(e.label)
        << "]\n";
  out << "order:";
  for (std::uint32_t id : order) out << " " << id;
  out << "\n";
  return out.str();
}

TaskRegistry::TaskRegistry(std::filesystem::path file) : file_(std::move(file)) {
  load();
}

void TaskRegistry::load() {
  if (!std::filesystem::exists(file_)) return;
  for (const std::string& line : split(read_text_file(file_), '\n')) {
    if (trim(line).empty()) continue;
    auto kv = parse_kv_line(line);
    if (!kv.count("task")) continue;
    TaskBinding binding;
    binding.spec.name = kv.at("task");
    binding.spec.input_type = task_input_type_from(kv.at("input"));
    binding.spec.task_type = task_kind_from(kv.at("type"));
    if (kv.count("labels") && !kv.at("labels").empty())
      for (const std::string& raw : split(kv.at("labels"), ';'))
        binding.spec.output_labels.push_back(decode_field(raw));
    binding.model_id = std::stoull(kv.at("model"));
    binding.origin = kv.count("origin") ? kv.at("origin") : "override";
    tasks_[binding.spec.name] = std::move(binding);
  }
}

void TaskRegistry::persist(const TaskBinding& binding) {
  std::ostringstream line;
  line << "task=" << encode_field(binding.spec.name)
       << " input=" << task_input_type_name(binding.spec.input_type)
       << " type=" << task_kind_name(binding.spec.task_type) << " labels=";
  for (std::size_t i = 0; i < binding.spec.output_labels.size(); ++i)
    line << (i ? ";" : "") << encode_field(binding.spec.output_labels[i]);
  line << " model=" << binding.model_id << " origin=" << binding.origin << "\n";
  append_text_file(file_, line.str());
}

TaskBinding TaskRegistry::register_task(const TaskSpec& spec,
                                        const SelectorBundle* selector,
                                        const TaskFeatures* features,
                                        std::optional<std::uint64_t> override_model) {
  spec.validate();
  if (tasks_.count(spec.name))
    raise(ErrorCode::DuplicateTask, "task '" + spec.name + "' already registered");

  TaskBinding binding;
  binding.spec = spec;
  if (override_model) {
    binding.model_id = *override_model;
    binding.origin = "override";
  } else {
    if (!selector || selector->model_ids.empty())
      raise(ErrorCode::SelectionUnavailable,
            "no trained embedding space; train the selector or pass a model override");
    if (!features)
      raise(ErrorCode::SelectionUnavailable,
            "selection needs task features; pass a feature vector or a model override");
    auto regressor = fit_regressor(selector->features, selector->space.H);
    TaskEmbedding embedding = project_task(*regressor, *features);
    auto scores = transfer_scores(selector->space.W, embedding);
    binding.model_id = select_model(scores, selector->model_ids);
    binding.origin = "selected";
  }
  tasks_[spec.name] = binding;
  persist(binding);
  return binding;
}

std::optional<TaskBinding> TaskRegistry::find(const std::string& name) const {
  auto it = tasks_.find(name);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

std::vector<TaskBinding> TaskRegistry::list() const {
  std::vector<TaskBinding> out;
  for (const auto& [name, binding] : tasks_) out.push_back(binding);
  return out;
}

TaskBinding TaskRegistry::reselect(const std::string& name,
                                   const SelectorBundle& selector,
                                   const TaskFeatures& features) {
  auto it = tasks_.find(name);
  if (it == tasks_.end())
    raise(ErrorCode::UnknownTask, "no task '" + name + "'");
  auto regressor = fit_regressor(selector.features, selector.space.H);
  TaskEmbedding embedding = project_task(*regressor, features);
  auto scores = transfer_scores(selector.space.W, embedding);
  it->second.model_id = select_model(scores, selector.model_ids);
  it->second.origin = "selected";
  persist(it->second);
  return it->second;
}

}  // namespace taskdb
