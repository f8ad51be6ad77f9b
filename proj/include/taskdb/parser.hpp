#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "taskdb/table.hpp"
#include "taskdb/task.hpp"

namespace taskdb {

struct SourcePos {
  int line = 1;
  int col = 1;
  std::string str() const { return std::to_string(line) + ":" + std::to_string(col); }
};

struct ColumnRef {
  std::string qualifier;  // table alias, may be empty before binding
  std::string column;
  SourcePos pos;
  std::string canonical;  // "alias.column" once bound

  std::string text() const {
    return qualifier.empty() ? column : qualifier + "." + column;
  }
};

struct TaskCall {
  std::string task_name;
  ColumnRef arg;
  SourcePos pos;

  std::string text() const { return task_name + "(" + arg.text() + ")"; }
};

struct ScalarExpr {
  enum class Kind { Column, Task } kind = Kind::Column;
  ColumnRef column;
  TaskCall task;

  std::string text() const {
    return kind == Kind::Column ? column.text() : task.text();
  }
};

enum class AggFn { Avg, Count, Sum };
const char* agg_fn_name(AggFn fn);

struct SelectItem {
  enum class Kind { Star, Column, Task, Aggregate } kind = Kind::Column;
  ColumnRef column;
  TaskCall task;
  AggFn agg = AggFn::Count;
  bool agg_star = false;   // COUNT(*)
  ScalarExpr agg_arg;
  std::string alias;       // AS name, optional

  std::string display() const;
};

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
const char* cmp_op_text(CmpOp op);

struct Literal {
  bool is_number = false;
  double number = 0.0;
  std::string text;

  std::string display() const {
    return is_number ? text : "\"" + text + "\"";
  }
};

struct Predicate {
  ScalarExpr lhs;
  CmpOp op = CmpOp::Eq;
  Literal rhs;
  SourcePos pos;
};

struct TableRef {
  std::string table;
  std::string alias;  // defaults to the table name
  SourcePos pos;
};

struct JoinClause {
  TableRef table;
  ColumnRef left;
  ColumnRef right;
};

struct SelectQuery {
  std::vector<SelectItem> items;  // empty + star=true for SELECT *
  bool star = false;
  TableRef from;
  std::vector<JoinClause> joins;
  std::vector<Predicate> where;   // AND-composed
  std::vector<ColumnRef> group_by;
};

struct CreateTaskStmt {
  TaskSpec spec;
};

struct SelectModelStmt {
  std::string task_name;
};

struct Statement {
  enum class Kind { Select, Explain, CreateTask, SelectModel } kind = Kind::Select;
  SelectQuery select;       // Select / Explain
  CreateTaskStmt create_task;
  SelectModelStmt select_model;
};

/// Parses one DSL statement. Syntax errors carry line:column positions.
Statement parse_statement(const std::string& text);

/// Name-resolution context for binding.
struct BinderContext {
  const TableCatalog* tables = nullptr;
  std::function<bool(const std::string&)> has_task;
};

/// Resolves table aliases, canonical column names, and task references.
/// Raises UnknownTable / UnknownColumn / UnknownTask with positions.
void bind_select(SelectQuery& query, const BinderContext& ctx);

}  // namespace taskdb
