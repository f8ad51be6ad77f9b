#pragma once

// Reference interpreter for result checking: evaluates a bound SelectQuery
// row-at-a-time with nested-loop joins and per-row model application. It
// shares the parser, tables, and stub kernels with the engine but none of
// the executor machinery (no DAG, no batching, no cache, no pipeline).

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "taskdb/backends.hpp"
#include "taskdb/engine.hpp"
#include "taskdb/executor.hpp"
#include "taskdb/parser.hpp"
#include "taskdb/strutil.hpp"

namespace naive {

using namespace taskdb;

struct ResultRow {
  std::vector<std::string> cells;
  bool operator<(const ResultRow& other) const { return cells < other.cells; }
  bool operator==(const ResultRow& other) const { return cells == other.cells; }
};

struct ResultSet {
  std::vector<std::string> header;
  std::vector<ResultRow> rows;  // sorted = canonical multiset form

  void canonicalize() { std::sort(rows.begin(), rows.end()); }
};

inline ResultSet from_rowbatch(const RowBatch& batch) {
  ResultSet out;
  for (const Column& c : batch.columns) out.header.push_back(c.name);
  for (std::size_t r = 0; r < batch.row_count; ++r) {
    ResultRow row;
    for (const Column& c : batch.columns) row.cells.push_back(c.repr(r));
    out.rows.push_back(std::move(row));
  }
  out.canonicalize();
  return out;
}

class Interpreter {
 public:
  explicit Interpreter(Engine& engine)
      : engine_(engine),
        extractor_(engine.config().extractor_dim, engine.config().extractor_cost) {}

  ResultSet run(const std::string& sql) {
    Statement stmt = parse_statement(sql);
    BinderContext binder;
    binder.tables = &engine_.tables();
    binder.has_task = [&](const std::string& name) {
      return engine_.tasks().find(name).has_value();
    };
    bind_select(stmt.select, binder);
    return eval(stmt.select);
  }

 private:
  // One combined row: canonical column name -> (table, row index).
  struct Binding {
    const RowBatch* table;
    std::string alias;
    std::size_t row;
  };
  using Combined = std::vector<Binding>;

  const Column& column_of(const Binding& b, const std::string& canonical) const {
    std::string bare = canonical.substr(b.alias.size() + 1);
    return b.table->at(b.alias + "." + bare);
  }

  std::pair<const Column*, std::size_t> locate(const Combined& row,
                                               const std::string& canonical) const {
    for (const Binding& b : row) {
      if (canonical.rfind(b.alias + ".", 0) == 0) {
        std::string bare = canonical.substr(b.alias.size() + 1);
        for (const Column& c : b.table->columns)
          if (c.name == b.alias + "." + bare || c.name == bare)
            return {&c, b.row};
      }
    }
    raise(ErrorCode::UnknownColumn, "naive: no column " + canonical);
  }

  std::string cell_repr(const Combined& row, const std::string& canonical) {
    auto [col, r] = locate(row, canonical);
    return col->repr(r);
  }

  double cell_num(const Combined& row, const std::string& canonical) {
    auto [col, r] = locate(row, canonical);
    if (col->type != ColumnType::Num)
      raise(ErrorCode::InvalidArgument, "naive: non-numeric " + canonical);
    return col->nums[r];
  }

  // Direct per-row model application, bypassing all executor batching.
  Mvec apply_task(const TaskBinding& binding, const Combined& row,
                  const std::string& canonical) {
    auto [col, r] = locate(row, canonical);
    Mvec input;
    if (binding.spec.input_type == TaskInputType::Text ||
        binding.spec.input_type == TaskInputType::Image) {
      input = extractor_.extract(col->texts[r]);
    } else if (col->type == ColumnType::Tensor) {
      input = col->tensors[r];
    } else {
      input = Mvec({1}, {col->nums[r]});
    }
    const StubModel& stub = stub_for(binding.model_id);
    return stub.apply(input);
  }

  std::string task_repr(const TaskBinding& binding, const Mvec& out) {
    if (binding.spec.task_type == TaskKind::Classification) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < out.size(); ++i)
        if (out.data()[i] > out.data()[best]) best = i;
      best = std::min(best, binding.spec.output_labels.size() - 1);
      return binding.spec.output_labels[best];
    }
    return format_double(out.data()[0]);
  }

  const StubModel& stub_for(std::uint64_t model_id) {
    auto it = stubs_.find(model_id);
    if (it == stubs_.end()) {
      StubModel m = StubModel::from_assembled(engine_.repo().load_model(model_id));
      it = stubs_.emplace(model_id, std::move(m)).first;
    }
    return it->second;
  }

  std::string scalar_repr(const ScalarExpr& expr, const Combined& row) {
    if (expr.kind == ScalarExpr::Kind::Column)
      return cell_repr(row, expr.column.canonical);
    auto binding = engine_.tasks().find(expr.task.task_name);
    return task_repr(*binding, apply_task(*binding, row, expr.task.arg.canonical));
  }

  double scalar_num(const ScalarExpr& expr, const Combined& row) {
    if (expr.kind == ScalarExpr::Kind::Column)
      return cell_num(row, expr.column.canonical);
    auto binding = engine_.tasks().find(expr.task.task_name);
    Mvec out = apply_task(*binding, row, expr.task.arg.canonical);
    return out.data()[0];
  }

  bool predicate_holds(const Predicate& pred, const Combined& row) {
    // Numeric comparison when both sides are numeric, else text compare.
    bool lhs_is_num;
    std::string lhs_text;
    double lhs_num = 0.0;
    if (pred.lhs.kind == ScalarExpr::Kind::Column) {
      auto [col, r] = locate(row, pred.lhs.column.canonical);
      lhs_is_num = col->type == ColumnType::Num;
      if (lhs_is_num)
        lhs_num = col->nums[r];
      else
        lhs_text = col->texts[r];
    } else {
      auto binding = engine_.tasks().find(pred.lhs.task.task_name);
      Mvec out = apply_task(*binding, row, pred.lhs.task.arg.canonical);
      lhs_is_num = binding->spec.task_type != TaskKind::Classification;
      if (lhs_is_num)
        lhs_num = out.data()[0];
      else
        lhs_text = task_repr(*binding, out);
    }
    int cmp;
    if (lhs_is_num) {
      double rhs = pred.rhs.is_number ? pred.rhs.number : std::stod(pred.rhs.text);
      cmp = lhs_num < rhs ? -1 : (lhs_num > rhs ? 1 : 0);
    } else {
      int c = lhs_text.compare(pred.rhs.text);
      cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    switch (pred.op) {
      case CmpOp::Eq: return cmp == 0;
      case CmpOp::Ne: return cmp != 0;
      case CmpOp::Lt: return cmp < 0;
      case CmpOp::Le: return cmp <= 0;
      case CmpOp::Gt: return cmp > 0;
      case CmpOp::Ge: return cmp >= 0;
    }
    return false;
  }

  ResultSet eval(const SelectQuery& query) {
    // Enumerate the joined row space by nested loops.
    std::vector<std::pair<std::string, const RowBatch*>> tables;
    tables.push_back({query.from.alias, &engine_.tables().get(query.from.table)});
    for (const JoinClause& join : query.joins)
      tables.push_back({join.table.alias, &engine_.tables().get(join.table.table)});

    std::vector<Combined> rows;
    Combined current;
    std::function<void(std::size_t)> recurse = [&](std::size_t depth) {
      if (depth == tables.size()) {
        for (const JoinClause& join : query.joins) {
          if (cell_repr(current, join.left.canonical) !=
              cell_repr(current, join.right.canonical))
            return;
        }
        for (const Predicate& pred : query.where)
          if (!predicate_holds(pred, current)) return;
        rows.push_back(current);
        return;
      }
      const auto& [alias, table] = tables[depth];
      for (std::size_t r = 0; r < table->row_count; ++r) {
        current.push_back({table, alias, r});
        recurse(depth + 1);
        current.pop_back();
      }
    };
    recurse(0);

    ResultSet out;
    bool has_aggregates = false;
    for (const SelectItem& item : query.items)
      if (item.kind == SelectItem::Kind::Aggregate) has_aggregates = true;

    if (!query.group_by.empty() || has_aggregates) {
      for (const SelectItem& item : query.items) out.header.push_back(item.display());
      struct Group {
        std::vector<std::string> keys;
        std::vector<Combined> members;
      };
      std::vector<std::string> order;
      std::map<std::string, Group> groups;
      for (const Combined& row : rows) {
        std::string key;
        std::vector<std::string> keys;
        for (const ColumnRef& k : query.group_by) {
          keys.push_back(cell_repr(row, k.canonical));
          key += keys.back();
          key.push_back('\x1f');
        }
        auto it = groups.find(key);
        if (it == groups.end()) {
          it = groups.emplace(key, Group{keys, {}}).first;
          order.push_back(key);
        }
        it->second.members.push_back(row);
      }
      if (query.group_by.empty() && groups.empty()) {
        groups.emplace("", Group{{}, {}});
        order.push_back("");
      }
      for (const std::string& key : order) {
        Group& group = groups.at(key);
        ResultRow out_row;
        for (const SelectItem& item : query.items) {
          if (item.kind == SelectItem::Kind::Column) {
            std::size_t idx = 0;
            for (std::size_t k = 0; k < query.group_by.size(); ++k)
              if (query.group_by[k].canonical == item.column.canonical) idx = k;
            out_row.cells.push_back(group.keys[idx]);
          } else if (item.kind == SelectItem::Kind::Aggregate) {
            double sum = 0.0;
            std::uint64_t count = 0;
            for (const Combined& member : group.members) {
              ++count;
              if (!item.agg_star) sum += scalar_num(item.agg_arg, member);
            }
            double value = item.agg == AggFn::Count ? double(count)
                           : item.agg == AggFn::Sum ? sum
                           : (count == 0 ? 0.0 : sum / double(count));
            out_row.cells.push_back(format_double(value));
          }
        }
        out.rows.push_back(std::move(out_row));
      }
      out.canonicalize();
      return out;
    }

    // Plain select list (columns, task calls, or star).
    if (query.star) {
      for (const auto& [alias, table] : tables)
        for (const Column& c : table->columns) out.header.push_back(c.name);
      for (const Combined& row : rows) {
        ResultRow out_row;
        for (const Binding& b : row)
          for (const Column& c : b.table->columns)
            out_row.cells.push_back(c.repr(b.row));
        out.rows.push_back(std::move(out_row));
      }
    } else {
      for (const SelectItem& item : query.items) out.header.push_back(item.display());
      for (const Combined& row : rows) {
        ResultRow out_row;
        for (const SelectItem& item : query.items) {
          if (item.kind == SelectItem::Kind::Column)
            out_row.cells.push_back(cell_repr(row, item.column.canonical));
          else if (item.kind == SelectItem::Kind::Task) {
            auto binding = engine_.tasks().find(item.task.task_name);
            out_row.cells.push_back(
                task_repr(*binding, apply_task(*binding, row, item.task.arg.canonical)));
          }
        }
        out.rows.push_back(std::move(out_row));
      }
    }
    out.canonicalize();
    return out;
  }

  Engine& engine_;
  HashingExtractor extractor_;
  std::map<std::uint64_t, StubModel> stubs_;
};

}  // namespace naive
