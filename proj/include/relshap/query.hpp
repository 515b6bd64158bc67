/*
 * Copyright 2026 The relshap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "relcore.hpp"

namespace relshap {

// Declarative select-project-join query with one scalar aggregate.

struct ColumnRef {
  std::string relation;  // relation name or alias
  std::string column;
  bool operator==(const ColumnRef&) const = default;
};

/// A column reference, a numeric literal, or a quoted text/date literal.
using Operand = std::variant<ColumnRef, double, std::string>;

enum class CompareOp { eq, ne, lt, le, gt, ge };

struct Predicate {
  Operand lhs;
  CompareOp op = CompareOp::eq;
  Operand rhs;
};

struct EquiJoin {
  ColumnRef left;
  ColumnRef right;
};

/// Arithmetic over join-row columns: + - * and unary minus.
struct ArithExpr {
  enum class Kind { column, constant, negate, add, sub, mul };
  Kind kind = Kind::constant;
  ColumnRef column;
  double value = 0;
  std::vector<ArithExpr> args;
};

enum class AggregateKind { sum, count, exists };

struct Aggregate {
  AggregateKind kind = AggregateKind::count;
  std::optional<ArithExpr> expr;  // SUM only
};

struct RelationRef {
  std::string name;
  std::string alias;  // empty: referenced by name
};

struct QuerySpec {
  std::vector<RelationRef> relations;
  std::vector<EquiJoin> equijoins;
  std::vector<Predicate> predicates;
  Aggregate aggregate;
};

inline std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::eq: return "=";
    case CompareOp::ne: return "<>";
    case CompareOp::lt: return "<";
    case CompareOp::le: return "<=";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
  }
  return "?";
}

inline std::string_view to_string(AggregateKind kind) {
  switch (kind) {
    case AggregateKind::sum: return "sum";
    case AggregateKind::count: return "count";
    case AggregateKind::exists: return "exists";
  }
  return "?";
}

namespace detail {

class ExprLexer {
 public:
  enum class Tok { ident, number, text, op, lparen, rparen, end };
  struct Token {
    Tok kind = Tok::end;
    std::string text;
    double number = 0;
  };

  explicit ExprLexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("cannot parse '" + std::string(src_) + "': " + what);
  }

 private:
  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    cur_ = Token{};
    if (pos_ >= src_.size()) return;
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' || src_[pos_] == '.'))
        ++pos_;
      cur_ = {Tok::ident, std::string(src_.substr(start, pos_ - start))};
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = pos_;
      while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                                    src_[pos_] == 'e' || src_[pos_] == 'E'))
        ++pos_;
      std::string lit(src_.substr(start, pos_ - start));
      double v = 0;
      auto [ptr, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
      if (ec != std::errc() || ptr != lit.data() + lit.size()) fail("bad number '" + lit + "'");
      cur_ = {Tok::number, lit, v};
    } else if (c == '\'') {
      auto close = src_.find('\'', pos_ + 1);
      if (close == std::string_view::npos) fail("unterminated string literal");
      cur_ = {Tok::text, std::string(src_.substr(pos_ + 1, close - pos_ - 1))};
      pos_ = close + 1;
    } else if (c == '(') {
      cur_ = {Tok::lparen, "("};
      ++pos_;
    } else if (c == ')') {
      cur_ = {Tok::rparen, ")"};
      ++pos_;
    } else {
      static constexpr std::string_view two[] = {"<=", ">=", "<>", "!="};
      for (auto op : two)
        if (src_.substr(pos_, 2) == op) {
          cur_ = {Tok::op, std::string(op)};
          pos_ += 2;
          return;
        }
      if (std::string_view("+-*=<>").find(c) == std::string_view::npos) fail(std::string("unexpected '") + c + "'");
      cur_ = {Tok::op, std::string(1, c)};
      ++pos_;
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Token cur_;
};

inline ColumnRef split_column(const std::string& ident, const ExprLexer& lex) {
  auto dot = ident.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == ident.size() || ident.find('.', dot + 1) != std::string::npos)
    lex.fail("column reference '" + ident + "' must be relation.column");
  return {ident.substr(0, dot), ident.substr(dot + 1)};
}

// expr := term (('+'|'-') term)* ; term := unary ('*' unary)* ; unary := '-' unary | atom
inline ArithExpr parse_sum(ExprLexer& lex);

inline ArithExpr parse_unary(ExprLexer& lex) {
  using Tok = ExprLexer::Tok;
  const auto& t = lex.peek();
  if (t.kind == Tok::op && t.text == "-") {
    lex.take();
    ArithExpr e;
    e.kind = ArithExpr::Kind::negate;
    e.args.push_back(parse_unary(lex));
    return e;
  }
  if (t.kind == Tok::lparen) {
    lex.take();
    ArithExpr e = parse_sum(lex);
    if (lex.peek().kind != Tok::rparen) lex.fail("expected ')'");
    lex.take();
    return e;
  }
  if (t.kind == Tok::number) {
    ArithExpr e;
    e.kind = ArithExpr::Kind::constant;
    e.value = lex.take().number;
    return e;
  }
  if (t.kind == Tok::ident) {
    ArithExpr e;
    e.kind = ArithExpr::Kind::column;
    e.column = split_column(lex.take().text, lex);
    return e;
  }
  if (t.kind == Tok::op && t.text == "/") lex.fail("division is not supported");
  lex.fail("expected operand");
}

inline ArithExpr parse_product(ExprLexer& lex) {
  ArithExpr lhs = parse_unary(lex);
  while (lex.peek().kind == ExprLexer::Tok::op && lex.peek().text == "*") {
    lex.take();
    ArithExpr e;
    e.kind = ArithExpr::Kind::mul;
    e.args.push_back(std::move(lhs));
    e.args.push_back(parse_unary(lex));
    lhs = std::move(e);
  }
  return lhs;
}

inline ArithExpr parse_sum(ExprLexer& lex) {
  ArithExpr lhs = parse_product(lex);
  while (lex.peek().kind == ExprLexer::Tok::op && (lex.peek().text == "+" || lex.peek().text == "-")) {
    bool plus = lex.take().text == "+";
    ArithExpr e;
    e.kind = plus ? ArithExpr::Kind::add : ArithExpr::Kind::sub;
    e.args.push_back(std::move(lhs));
    e.args.push_back(parse_product(lex));
    lhs = std::move(e);
  }
  return lhs;
}

inline Operand parse_operand(ExprLexer& lex) {
  using Tok = ExprLexer::Tok;
  auto t = lex.take();
  switch (t.kind) {
    case Tok::ident: return split_column(t.text, lex);
    case Tok::number: return t.number;
    case Tok::text: return t.text;
    case Tok::op:
      if (t.text == "-" && lex.peek().kind == Tok::number) return -lex.take().number;
      [[fallthrough]];
    default: lex.fail("expected column, number or 'text'");
  }
}

inline CompareOp parse_compare(const std::string& op, const ExprLexer& lex) {
  if (op == "=") return CompareOp::eq;
  if (op == "<>" || op == "!=") return CompareOp::ne;
  if (op == "<") return CompareOp::lt;
  if (op == "<=") return CompareOp::le;
  if (op == ">") return CompareOp::gt;
  if (op == ">=") return CompareOp::ge;
  lex.fail("unknown comparison '" + op + "'");
}

inline std::string format_operand(const Operand& op) {
  if (auto* c = std::get_if<ColumnRef>(&op)) return c->relation + "." + c->column;
  if (auto* d = std::get_if<double>(&op)) return format_number(*d);
  return "'" + std::get<std::string>(op) + "'";
}

inline std::string format_expr(const ArithExpr& e) {
  switch (e.kind) {
    case ArithExpr::Kind::column: return e.column.relation + "." + e.column.column;
    case ArithExpr::Kind::constant: return format_number(e.value);
    case ArithExpr::Kind::negate: return "-(" + format_expr(e.args[0]) + ")";
    case ArithExpr::Kind::add: return "(" + format_expr(e.args[0]) + " + " + format_expr(e.args[1]) + ")";
    case ArithExpr::Kind::sub: return "(" + format_expr(e.args[0]) + " - " + format_expr(e.args[1]) + ")";
    case ArithExpr::Kind::mul: return format_expr(e.args[0]) + " * " + format_expr(e.args[1]);
  }
  return {};
}

}  // namespace detail

inline ArithExpr parse_arith(std::string_view text) {
  detail::ExprLexer lex(text);
  ArithExpr e = detail::parse_sum(lex);
  if (lex.peek().kind != detail::ExprLexer::Tok::end) lex.fail("trailing input");
  return e;
}

/// "lhs op rhs", e.g. "l.shipdate > o.orderdate" or "c.mktsegment = 'AUTO'".
inline Predicate parse_predicate(std::string_view text) {
  detail::ExprLexer lex(text);
  Predicate p;
  p.lhs = detail::parse_operand(lex);
  if (lex.peek().kind != detail::ExprLexer::Tok::op) lex.fail("expected comparison operator");
  p.op = detail::parse_compare(lex.take().text, lex);
  p.rhs = detail::parse_operand(lex);
  if (lex.peek().kind != detail::ExprLexer::Tok::end) lex.fail("trailing input");
  return p;
}

inline std::string format_predicate(const Predicate& p) {
  return detail::format_operand(p.lhs) + " " + std::string(to_string(p.op)) + " " + detail::format_operand(p.rhs);
}

/// {"relations": [...], "equijoins": ["a.x = b.y"], "predicates": [...],
///  "aggregate": {"kind": "sum", "expr": "..."}}
inline QuerySpec parse_query(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("query must be a JSON object");
  QuerySpec q;
  try {
    for (const auto& r : j.at("relations")) {
      if (r.is_string())
        q.relations.push_back({r.get<std::string>(), {}});
      else
        q.relations.push_back({r.at("name").get<std::string>(), r.value("alias", std::string())});
    }
    for (const auto& e : j.value("equijoins", nlohmann::json::array())) {
      Predicate p = e.is_array() ? parse_predicate(e.at(0).get<std::string>() + " = " + e.at(1).get<std::string>())
                                 : parse_predicate(e.get<std::string>());
      auto* l = std::get_if<ColumnRef>(&p.lhs);
      auto* r = std::get_if<ColumnRef>(&p.rhs);
      if (!l || !r || p.op != CompareOp::eq) throw ValidationError("equijoin must be 'rel.col = rel.col'");
      q.equijoins.push_back({*l, *r});
    }
    for (const auto& e : j.value("predicates", nlohmann::json::array())) {
      if (e.is_string()) {
        q.predicates.push_back(parse_predicate(e.get<std::string>()));
      } else {
        q.predicates.push_back(parse_predicate(e.at("lhs").get<std::string>() + " " + e.at("op").get<std::string>() +
                                               " " + e.at("rhs").get<std::string>()));
      }
    }
    const auto& agg = j.at("aggregate");
    std::string kind = agg.is_string() ? agg.get<std::string>() : agg.at("kind").get<std::string>();
    for (auto& ch : kind) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (kind == "sum") {
      q.aggregate.kind = AggregateKind::sum;
      q.aggregate.expr = parse_arith(agg.at("expr").get<std::string>());
    } else if (kind == "count" || kind == "count(*)") {
      q.aggregate.kind = AggregateKind::count;
    } else if (kind == "exists") {
      q.aggregate.kind = AggregateKind::exists;
    } else {
      throw ValidationError("unknown aggregate '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed query: ") + e.what());
  }
  if (q.relations.empty()) throw ValidationError("query lists no relations");
  return q;
}

inline nlohmann::json query_json(const QuerySpec& q) {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& r : q.relations)
    rels.push_back(r.alias.empty() ? nlohmann::json(r.name) : nlohmann::json{{"name", r.name}, {"alias", r.alias}});
  nlohmann::json joins = nlohmann::json::array();
  for (const auto& e : q.equijoins)
    joins.push_back(e.left.relation + "." + e.left.column + " = " + e.right.relation + "." + e.right.column);
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : q.predicates) preds.push_back(format_predicate(p));
  nlohmann::json agg = {{"kind", to_string(q.aggregate.kind)}};
  if (q.aggregate.expr) agg["expr"] = detail::format_expr(*q.aggregate.expr);
  return {{"relations", rels}, {"equijoins", joins}, {"predicates", preds}, {"aggregate", agg}};
}

}  // namespace relshap
