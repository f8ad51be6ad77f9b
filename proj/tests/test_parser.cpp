#include <doctest.h>

#include <functional>

#include "taskdb/parser.hpp"

using namespace taskdb;

namespace {

bool fails_at(ErrorCode code, const std::string& prefix,
              const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() != code) return false;
    std::string what = e.what();
    return what.find(prefix) != std::string::npos;
  }
  return false;
}

TableCatalog two_tables() {
  TableCatalog catalog;
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
  return catalog;
}

BinderContext make_binder(const TableCatalog& catalog) {
  BinderContext ctx;
  ctx.tables = &catalog;
  ctx.has_task = [](const std::string& name) {
    return name == "sentiment_classifier" || name == "image_recognition";
  };
  return ctx;
}

}  // namespace

TEST_CASE("basic select parses into items and clauses") {
  Statement stmt = parse_statement(
      "SELECT sentiment_classifier(comment) FROM review");
  REQUIRE(stmt.kind == Statement::Kind::Select);
  REQUIRE(stmt.select.items.size() == 1);
  CHECK(stmt.select.items[0].kind == SelectItem::Kind::Task);
  CHECK(stmt.select.items[0].task.task_name == "sentiment_classifier");
  CHECK(stmt.select.from.table == "review");
}

TEST_CASE("table-1 shaped join query parses") {
  Statement stmt = parse_statement(
      "SELECT R.uid, AVG(sentiment_classifier(R.comment)) "
      "FROM product AS P INNER JOIN review AS R ON P.id = R.pid "
      "WHERE image_recognition(P.img) = \"iPhone 16\" "
      "AND image_recognition(R.img) = \"iPhone 16\" "
      "GROUP BY R.uid");
  REQUIRE(stmt.kind == Statement::Kind::Select);
  const SelectQuery& q = stmt.select;
  REQUIRE(q.joins.size() == 1);
  CHECK(q.joins[0].table.alias == "R");
  REQUIRE(q.where.size() == 2);
  CHECK(q.where[0].lhs.kind == ScalarExpr::Kind::Task);
  CHECK(q.where[0].rhs.text == "iPhone 16");
  REQUIRE(q.group_by.size() == 1);
  REQUIRE(q.items.size() == 2);
  CHECK(q.items[1].kind == SelectItem::Kind::Aggregate);
  CHECK(q.items[1].agg == AggFn::Avg);
}

TEST_CASE("syntax errors carry line and column") {
  CHECK(fails_at(ErrorCode::SyntaxError, "1:1",
                 [] { parse_statement("SELEC x"); }));
  CHECK(fails_at(ErrorCode::SyntaxError, "1:10",
                 [] { parse_statement("SELECT x FRM t"); }));
  CHECK(fails_at(ErrorCode::SyntaxError, "2:",
                 [] { parse_statement("SELECT x\nFROM"); }));
  CHECK(fails_at(ErrorCode::SyntaxError, "unterminated",
                 [] { parse_statement("SELECT * FROM t WHERE a = 'oops"); }));
}

TEST_CASE("create task parses the table-1 definition row") {
  Statement stmt = parse_statement(
      "CREATE TASK sentiment_classifier (INPUT=Text_Blob, "
      "OUTPUT in 'POS, NEG, NEU', Type ='Classification')");
  REQUIRE(stmt.kind == Statement::Kind::CreateTask);
  const TaskSpec& spec = stmt.create_task.spec;
  CHECK(spec.name == "sentiment_classifier");
  CHECK(spec.input_type == TaskInputType::Text);
  CHECK(spec.task_type == TaskKind::Classification);
  CHECK(spec.output_labels == std::vector<std::string>{"POS", "NEG", "NEU"});
}

TEST_CASE("create task regression form") {
  Statement stmt = parse_statement(
      "CREATE TASK price_forecast (INPUT=Series, OUTPUT=Numeric, TYPE=Regression)");
  CHECK(stmt.create_task.spec.task_type == TaskKind::Regression);
  CHECK(stmt.create_task.spec.output_labels.empty());
}

TEST_CASE("select model for task statement") {
  Statement stmt = parse_statement("SELECT MODEL FOR TASK sentiment_classifier");
  REQUIRE(stmt.kind == Statement::Kind::SelectModel);
  CHECK(stmt.select_model.task_name == "sentiment_classifier");
}

TEST_CASE("explain wraps a select") {
  Statement stmt = parse_statement("EXPLAIN SELECT * FROM review");
  CHECK(stmt.kind == Statement::Kind::Explain);
  CHECK(stmt.select.star);
}

TEST_CASE("binder resolves aliases and validates names") {
  TableCatalog catalog = two_tables();
  BinderContext ctx = make_binder(catalog);

  Statement stmt = parse_statement(
      "SELECT R.comment FROM review AS R WHERE R.uid = 7");
  bind_select(stmt.select, ctx);
  CHECK(stmt.select.items[0].column.canonical == "R.comment");
  CHECK(stmt.select.where[0].lhs.column.canonical == "R.uid");

  // Unqualified columns resolve when unambiguous.
  Statement bare = parse_statement("SELECT comment FROM review");
  bind_select(bare.select, ctx);
  CHECK(bare.select.items[0].column.canonical == "review.comment");

  Statement unknown_table = parse_statement("SELECT x FROM ghost");
  CHECK(fails_at(ErrorCode::UnknownTable, "ghost",
                 [&] { bind_select(unknown_table.select, ctx); }));

  Statement unknown_col = parse_statement("SELECT ghost FROM review");
  CHECK(fails_at(ErrorCode::UnknownColumn, "ghost",
                 [&] { bind_select(unknown_col.select, ctx); }));

  Statement unknown_task = parse_statement("SELECT mystery(comment) FROM review");
  CHECK(fails_at(ErrorCode::UnknownTask, "mystery",
                 [&] { bind_select(unknown_task.select, ctx); }));

  // img exists in both tables: ambiguous without a qualifier.
  Statement ambiguous = parse_statement(
      "SELECT img FROM review AS R INNER JOIN product AS P ON P.id = R.pid");
  CHECK(fails_at(ErrorCode::UnknownColumn, "ambiguous",
                 [&] { bind_select(ambiguous.select, ctx); }));
}
