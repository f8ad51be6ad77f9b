#include "taskdb/parser.hpp"

#include <algorithm>
#include <cctype>

#include "taskdb/error.hpp"
#include "taskdb/strutil.hpp"

namespace taskdb {

const char* agg_fn_name(AggFn fn) {
  switch (fn) {
    case AggFn::Avg: return "AVG";
    case AggFn::Count: return "COUNT";
    case AggFn::Sum: return "SUM";
  }
  return "?";
}

const char* cmp_op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

std::string SelectItem::display() const {
  if (!alias.empty()) return alias;
  switch (kind) {
    case Kind::Star: return "*";
    case Kind::Column: return column.text();
    case Kind::Task: return task.text();
    case Kind::Aggregate:
      return std::string(agg_fn_name(agg)) + "(" +
             (agg_star ? "*" : agg_arg.text()) + ")";
  }
  return "?";
}

namespace {

enum class TokKind { Ident, Number, String, Symbol, End };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;   // raw identifier / symbol / string body / number text
  std::string upper;  // uppercased identifier for keyword matching
  double number = 0.0;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
    tok_ = Token{};
    tok_.pos = {line_, col_};
    if (pos_ >= text_.size()) {
      tok_.kind = TokKind::End;
      return;
    }
    char c = text_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_')) {
        ++pos_;
        ++col_;
      }
      tok_.kind = TokKind::Ident;
      tok_.text = text_.substr(start, pos_ - start);
      for (char ch : tok_.text)
        tok_.upper.push_back(char(std::toupper(static_cast<unsigned char>(ch))));
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < text_.size() &&
         std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      std::size_t start = pos_;
      ++pos_;
      ++col_;
      while (pos_ < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E' ||
              ((text_[pos_] == '+' || text_[pos_] == '-') &&
               (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')))) {
        ++pos_;
        ++col_;
      }
      tok_.kind = TokKind::Number;
      tok_.text = text_.substr(start, pos_ - start);
      tok_.number = std::stod(tok_.text);
      return;
    }
    if (c == '\'' || c == '"') {
      char quote = c;
      ++pos_;
      ++col_;
      std::string body;
      while (pos_ < text_.size() && text_[pos_] != quote) {
        body.push_back(text_[pos_]);
        ++pos_;
        ++col_;
      }
      if (pos_ >= text_.size())
        raise(ErrorCode::SyntaxError,
              tok_.pos.str() + ": unterminated string literal");
      ++pos_;  // closing quote
      ++col_;
      tok_.kind = TokKind::String;
      tok_.text = body;
      return;
    }
    // multi-char operators
    static const char* two_char[] = {"!=", "<>", "<=", ">="};
    for (const char* op : two_char) {
      if (text_.compare(pos_, 2, op) == 0) {
        tok_.kind = TokKind::Symbol;
        tok_.text = op;
        pos_ += 2;
        col_ += 2;
        return;
      }
    }
    tok_.kind = TokKind::Symbol;
    tok_.text = std::string(1, c);
    ++pos_;
    ++col_;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lexer_(text) {}

  Statement parse() {
    Statement stmt;
    const Token& t = lexer_.peek();
    if (t.kind != TokKind::Ident)
      fail(t.pos, "expected a statement keyword");
    if (t.upper == "EXPLAIN") {
      lexer_.next();
      expect_keyword("SELECT");
      stmt.kind = Statement::Kind::Explain;
      stmt.select = parse_select_body();
    } else if (t.upper == "SELECT") {
      lexer_.next();
      if (lexer_.peek().kind == TokKind::Ident && lexer_.peek().upper == "MODEL") {
        lexer_.next();
        expect_keyword("FOR");
        expect_keyword("TASK");
        stmt.kind = Statement::Kind::SelectModel;
        stmt.select_model.task_name = expect_ident("task name").text;
      } else {
        stmt.kind = Statement::Kind::Select;
        stmt.select = parse_select_body();
      }
    } else if (t.upper == "CREATE") {
      lexer_.next();
      expect_keyword("TASK");
      stmt.kind = Statement::Kind::CreateTask;
      stmt.create_task.spec = parse_task_spec();
    } else {
      fail(t.pos, "expected SELECT, EXPLAIN or CREATE TASK, got '" + t.text + "'");
    }
    const Token& end = lexer_.peek();
    if (end.kind == TokKind::Symbol && end.text == ";") lexer_.next();
    if (lexer_.peek().kind != TokKind::End)
      fail(lexer_.peek().pos, "unexpected trailing input '" + lexer_.peek().text + "'");
    return stmt;
  }

 private:
  [[noreturn]] void fail(SourcePos pos, const std::string& message) {
    raise(ErrorCode::SyntaxError, pos.str() + ": " + message);
  }

  Token expect_ident(const std::string& what) {
    const Token& t = lexer_.peek();
    if (t.kind != TokKind::Ident) fail(t.pos, "expected " + what);
    return lexer_.next();
  }

  void expect_keyword(const std::string& keyword) {
    const Token& t = lexer_.peek();
    if (t.kind != TokKind::Ident || t.upper != keyword)
      fail(t.pos, "expected " + keyword + ", got '" + t.text + "'");
    lexer_.next();
  }

  void expect_symbol(const std::string& symbol) {
    const Token& t = lexer_.peek();
    if (t.kind != TokKind::Symbol || t.text != symbol)
      fail(t.pos, "expected '" + symbol + "', got '" + t.text + "'");
    lexer_.next();
  }

  bool accept_symbol(const std::string& symbol) {
    const Token& t = lexer_.peek();
    if (t.kind == TokKind::Symbol && t.text == symbol) {
      lexer_.next();
      return true;
    }
    return false;
  }

  bool accept_keyword(const std::string& keyword) {
    const Token& t = lexer_.peek();
    if (t.kind == TokKind::Ident && t.upper == keyword) {
      lexer_.next();
      return true;
    }
    return false;
  }

  bool peek_keyword(const std::string& keyword) {
    const Token& t = lexer_.peek();
    return t.kind == TokKind::Ident && t.upper == keyword;
  }

  static bool is_agg_name(const std::string& upper) {
    return upper == "AVG" || upper == "COUNT" || upper == "SUM";
  }

  ColumnRef parse_column_ref() {
    Token first = expect_ident("column name");
    ColumnRef ref;
    ref.pos = first.pos;
    if (accept_symbol(".")) {
      Token second = expect_ident("column name after '.'");
      ref.qualifier = first.text;
      ref.column = second.text;
    } else {
      ref.column = first.text;
    }
    return ref;
  }

  ScalarExpr parse_scalar() {
    Token first = expect_ident("expression");
    ScalarExpr expr;
    if (lexer_.peek().kind == TokKind::Symbol && lexer_.peek().text == "(") {
      lexer_.next();
      TaskCall call;
      call.task_name = first.text;
      call.pos = first.pos;
      call.arg = parse_column_ref();
      expect_symbol(")");
      expr.kind = ScalarExpr::Kind::Task;
      expr.task = std::move(call);
      return expr;
    }
    ColumnRef ref;
    ref.pos = first.pos;
    if (accept_symbol(".")) {
      Token second = expect_ident("column name after '.'");
      ref.qualifier = first.text;
      ref.column = second.text;
    } else {
      ref.column = first.text;
    }
    expr.kind = ScalarExpr::Kind::Column;
    expr.column = std::move(ref);
    return expr;
  }

  SelectItem parse_select_item() {
    SelectItem item;
    const Token& t = lexer_.peek();
    if (t.kind == TokKind::Symbol && t.text == "*") {
      lexer_.next();
      item.kind = SelectItem::Kind::Star;
      return item;
    }
    if (t.kind == TokKind::Ident && is_agg_name(t.upper)) {
      Token agg_tok = lexer_.next();
      item.kind = SelectItem::Kind::Aggregate;
      item.agg = agg_tok.upper == "AVG"   ? AggFn::Avg
                 : agg_tok.upper == "SUM" ? AggFn::Sum
                                          : AggFn::Count;
      expect_symbol("(");
      if (accept_symbol("*")) {
        if (item.agg != AggFn::Count)
          fail(agg_tok.pos, "only COUNT accepts '*'");
        item.agg_star = true;
      } else {
        item.agg_arg = parse_scalar();
      }
      expect_symbol(")");
    } else {
      ScalarExpr expr = parse_scalar();
      if (expr.kind == ScalarExpr::Kind::Task) {
        item.kind = SelectItem::Kind::Task;
        item.task = std::move(expr.task);
      } else {
        item.kind = SelectItem::Kind::Column;
        item.column = std::move(expr.column);
      }
    }
    if (accept_keyword("AS")) item.alias = expect_ident("alias").text;
    return item;
  }

  TableRef parse_table_ref() {
    Token name = expect_ident("table name");
    TableRef ref;
    ref.table = name.text;
    ref.pos = name.pos;
    if (accept_keyword("AS")) {
      ref.alias = expect_ident("table alias").text;
    } else if (lexer_.peek().kind == TokKind::Ident &&
               !peek_keyword("INNER") && !peek_keyword("JOIN") &&
               !peek_keyword("WHERE") && !peek_keyword("GROUP") &&
               !peek_keyword("ON")) {
      ref.alias = lexer_.next().text;
    }
    if (ref.alias.empty()) ref.alias = ref.table;
    return ref;
  }

  Literal parse_literal() {
    const Token& t = lexer_.peek();
    if (t.kind == TokKind::Number) {
      Token num = lexer_.next();
      return Literal{true, num.number, num.text};
    }
    if (t.kind == TokKind::String) {
      Token str = lexer_.next();
      return Literal{false, 0.0, str.text};
    }
    fail(t.pos, "expected a literal");
  }

  Predicate parse_predicate() {
    Predicate pred;
    pred.pos = lexer_.peek().pos;
    pred.lhs = parse_scalar();
    const Token& op = lexer_.peek();
    if (op.kind != TokKind::Symbol) fail(op.pos, "expected a comparison operator");
    std::string sym = lexer_.next().text;
    if (sym == "=")
      pred.op = CmpOp::Eq;
    else if (sym == "!=" || sym == "<>")
      pred.op = CmpOp::Ne;
    else if (sym == "<")
      pred.op = CmpOp::Lt;
    else if (sym == "<=")
      pred.op = CmpOp::Le;
    else if (sym == ">")
      pred.op = CmpOp::Gt;
    else if (sym == ">=")
      pred.op = CmpOp::Ge;
    else
      fail(op.pos, "unknown comparison operator '" + sym + "'");
    pred.rhs = parse_literal();
    return pred;
  }

  SelectQuery parse_select_body() {
    SelectQuery query;
    while (true) {
      SelectItem item = parse_select_item();
      if (item.kind == SelectItem::Kind::Star)
        query.star = true;
      else
        query.items.push_back(std::move(item));
      if (!accept_symbol(",")) break;
    }
    expect_keyword("FROM");
    query.from = parse_table_ref();
    while (true) {
      if (accept_keyword("INNER")) {
        expect_keyword("JOIN");
      } else if (peek_keyword("JOIN")) {
        lexer_.next();
      } else {
        break;
      }
      JoinClause join;
      join.table = parse_table_ref();
      expect_keyword("ON");
      join.left = parse_column_ref();
      expect_symbol("=");
      join.right = parse_column_ref();
      query.joins.push_back(std::move(join));
    }
    if (accept_keyword("WHERE")) {
      query.where.push_back(parse_predicate());
      while (accept_keyword("AND")) query.where.push_back(parse_predicate());
    }
    if (accept_keyword("GROUP")) {
      expect_keyword("BY");
      query.group_by.push_back(parse_column_ref());
      while (accept_symbol(",")) query.group_by.push_back(parse_column_ref());
    }
    return query;
  }

  TaskSpec parse_task_spec() {
    TaskSpec spec;
    spec.name = expect_ident("task name").text;
    expect_symbol("(");
    bool have_input = false, have_output = false, have_type = false;
    while (true) {
      Token key = expect_ident("task attribute");
      if (key.upper == "INPUT") {
        expect_symbol("=");
        spec.input_type = task_input_type_from(expect_ident("input type").text);
        have_input = true;
      } else if (key.upper == "OUTPUT") {
        if (accept_keyword("IN")) {
          Token labels = lexer_.next();
          if (labels.kind != TokKind::String)
            fail(labels.pos, "expected a quoted label list after OUTPUT in");
          for (const std::string& raw : split(labels.text, ',')) {
            std::string label = trim(raw);
            if (!label.empty()) spec.output_labels.push_back(label);
          }
          spec.task_type = TaskKind::Classification;
        } else {
          expect_symbol("=");
          Token value = lexer_.next();
          if (value.kind != TokKind::Ident || value.upper != "NUMERIC")
            fail(value.pos, "expected Numeric or IN '<labels>' for OUTPUT");
          spec.task_type = TaskKind::Regression;
        }
        have_output = true;
      } else if (key.upper == "TYPE") {
        expect_symbol("=");
        const Token& v = lexer_.peek();
        std::string value;
        if (v.kind == TokKind::String)
          value = lexer_.next().text;
        else
          value = expect_ident("task type").text;
        spec.task_type = task_kind_from(value);
        have_type = true;
      } else {
        fail(key.pos, "unknown task attribute '" + key.text + "'");
      }
      if (!accept_symbol(",")) break;
    }
    expect_symbol(")");
    if (!have_input || !have_output)
      raise(ErrorCode::SyntaxError,
            "task definition needs INPUT and OUTPUT attributes");
    (void)have_type;  // TYPE may be implied by the OUTPUT form
    spec.validate();
    return spec;
  }

  Lexer lexer_;
};

}  // namespace

Statement parse_statement(const std::string& text) {
  Parser parser(text);
  return parser.parse();
}

namespace {

struct Scope {
  // alias -> table name, in FROM order
  std::vector<std::pair<std::string, std::string>> tables;
};

void bind_column(ColumnRef& ref, const Scope& scope, const TableCatalog& catalog) {
  if (!ref.qualifier.empty()) {
    for (const auto& [alias, table] : scope.tables) {
      if (alias == ref.qualifier) {
        if (!catalog.get(table).find(ref.column))
          raise(ErrorCode::UnknownColumn, ref.pos.str() + ": table '" + table +
                                              "' has no column '" + ref.column + "'");
        ref.canonical = ref.qualifier + "." + ref.column;
        return;
      }
    }
    raise(ErrorCode::UnknownTable,
          ref.pos.str() + ": unknown table alias '" + ref.qualifier + "'");
  }
  std::string found_alias;
  for (const auto& [alias, table] : scope.tables) {
    if (catalog.get(table).find(ref.column)) {
      if (!found_alias.empty())
        raise(ErrorCode::UnknownColumn, ref.pos.str() + ": column '" + ref.column +
                                            "' is ambiguous");
      found_alias = alias;
    }
  }
  if (found_alias.empty())
    raise(ErrorCode::UnknownColumn,
          ref.pos.str() + ": unknown column '" + ref.column + "'");
  ref.qualifier = found_alias;
  ref.canonical = found_alias + "." + ref.column;
}

void bind_task_call(TaskCall& call, const Scope& scope, const BinderContext& ctx) {
  if (!ctx.has_task || !ctx.has_task(call.task_name))
    raise(ErrorCode::UnknownTask,
          call.pos.str() + ": unknown task '" + call.task_name + "'");
  bind_column(call.arg, scope, *ctx.tables);
}

void bind_scalar(ScalarExpr& expr, const Scope& scope, const BinderContext& ctx) {
  if (expr.kind == ScalarExpr::Kind::Column)
    bind_column(expr.column, scope, *ctx.tables);
  else
    bind_task_call(expr.task, scope, ctx);
}

}  // namespace

void bind_select(SelectQuery& query, const BinderContext& ctx) {
  if (!ctx.tables) raise(ErrorCode::InvalidArgument, "binder has no table catalog");
  Scope scope;
  auto check_table = [&](const TableRef& ref) {
    if (!ctx.tables->has(ref.table))
      raise(ErrorCode::UnknownTable,
            ref.pos.str() + ": unknown table '" + ref.table + "'");
    for (const auto& [alias, table] : scope.tables)
      if (alias == ref.alias)
        raise(ErrorCode::SyntaxError,
              ref.pos.str() + ": duplicate table alias '" + ref.alias + "'");
    scope.tables.emplace_back(ref.alias, ref.table);
  };
  check_table(query.from);
  for (JoinClause& join : query.joins) check_table(join.table);
  for (JoinClause& join : query.joins) {
    bind_column(join.left, scope, *ctx.tables);
    bind_column(join.right, scope, *ctx.tables);
  }
  for (SelectItem& item : query.items) {
    switch (item.kind) {
      case SelectItem::Kind::Column:
        bind_column(item.column, scope, *ctx.tables);
        break;
      case SelectItem::Kind::Task:
        bind_task_call(item.task, scope, ctx);
        break;
      case SelectItem::Kind::Aggregate:
        if (!item.agg_star) bind_scalar(item.agg_arg, scope, ctx);
        break;
      case SelectItem::Kind::Star:
        break;
    }
  }
  for (Predicate& pred : query.where) bind_scalar(pred.lhs, scope, ctx);
  for (ColumnRef& col : query.group_by) bind_column(col, scope, *ctx.tables);
}

}  // namespace taskdb
