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

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "query.hpp"
#include "relcore.hpp"

namespace relshap {

/// Per-relation presence filter. Relations that were never restricted keep all rows.
class Mask {
 public:
  Mask() = default;
  explicit Mask(const DatabaseInstance& db) : rows_(db.relations().size()) {}

  /// Restricts relation `rel` to exactly `ids`; every id must belong to it.
  Mask& restrict_to(const DatabaseInstance& db, std::size_t rel, std::span<const TupleId> ids) {
    ensure(db);
    auto& bits = rows_[rel].emplace(db.relation(rel).size(), std::uint8_t{0});
    for (TupleId t : ids) {
      auto loc = db.locate(t);
      if (!loc || loc->first != rel)
        throw ValidationError("tuple " + db.label(t) + " does not belong to relation " + db.relation(rel).name());
      bits[loc->second] = 1;
    }
    return *this;
  }

  Mask& restrict_to(const DatabaseInstance& db, std::string_view rel, std::span<const TupleId> ids) {
    auto idx = db.find(rel);
    if (!idx) throw ValidationError("mask names unknown relation '" + std::string(rel) + "'");
    return restrict_to(db, *idx, ids);
  }

  /// Restricts a relation to the rows flagged in `present` (one byte per row).
  Mask& restrict_rows(const DatabaseInstance& db, std::size_t rel, std::vector<std::uint8_t> present) {
    ensure(db);
    if (present.size() != db.relation(rel).size()) throw ValidationError("mask row bitmap has wrong length");
    rows_[rel] = std::move(present);
    return *this;
  }

  bool restricted(std::size_t rel) const { return rel < rows_.size() && rows_[rel].has_value(); }

  bool contains(std::size_t rel, std::size_t row) const {
    return !restricted(rel) || (*rows_[rel])[row] != 0;
  }

 private:
  void ensure(const DatabaseInstance& db) {
    if (rows_.size() < db.relations().size()) rows_.resize(db.relations().size());
  }

  std::vector<std::optional<std::vector<std::uint8_t>>> rows_;
};

struct BoundColumn {
  std::size_t pos = 0;  // position in the query's relation list
  std::size_t column = 0;
  ColumnType type = ColumnType::decimal;
};

using BoundOperand = std::variant<BoundColumn, double, std::string>;

struct BoundPredicate {
  BoundOperand lhs;
  CompareOp op = CompareOp::eq;
  BoundOperand rhs;
  std::uint64_t positions = 0;  // bit per referenced query position
};

struct BoundJoin {
  BoundColumn left;
  BoundColumn right;
};

/// A QuerySpec resolved against one instance: positions, column indices, typed literals.
class BoundQuery {
 public:
  struct TermOp {
    enum class Kind { column, constant, negate, add, sub, mul } kind;
    std::size_t pos = 0;
    std::size_t column = 0;
    double value = 0;
  };

  const DatabaseInstance& instance() const { return *db_; }
  std::size_t arity() const { return rel_.size(); }
  std::size_t relation(std::size_t pos) const { return rel_[pos]; }
  const std::vector<std::size_t>& relations() const { return rel_; }
  AggregateKind kind() const { return kind_; }
  bool never_true() const { return never_true_; }
  const std::vector<std::vector<BoundPredicate>>& filters() const { return filters_; }
  const std::vector<BoundJoin>& joins() const { return joins_; }
  const std::vector<BoundPredicate>& cross() const { return cross_; }

  /// Positions ordered by instance relation index; combinations sort by rows in this order.
  const std::vector<std::size_t>& canonical_order() const { return canonical_; }

  double number(const BoundColumn& c, std::size_t row) const {
    return db_->relation(rel_[c.pos]).number(c.column, row);
  }
  const std::string& text(const BoundColumn& c, std::size_t row) const {
    return db_->relation(rel_[c.pos]).text(c.column, row);
  }

  /// Aggregate term of one join combination; `rows[pos]` is the row chosen at each position.
  double term(const std::uint32_t* rows) const {
    if (kind_ != AggregateKind::sum) return 1.0;
    double stack[kMaxStack];
    std::size_t top = 0;
    for (const auto& op : program_) {
      switch (op.kind) {
        case TermOp::Kind::column:
          stack[top++] = db_->relation(rel_[op.pos]).number(op.column, rows[op.pos]);
          break;
        case TermOp::Kind::constant: stack[top++] = op.value; break;
        case TermOp::Kind::negate: stack[top - 1] = -stack[top - 1]; break;
        case TermOp::Kind::add: --top; stack[top - 1] = stack[top - 1] + stack[top]; break;
        case TermOp::Kind::sub: --top; stack[top - 1] = stack[top - 1] - stack[top]; break;
        case TermOp::Kind::mul: --top; stack[top - 1] = stack[top - 1] * stack[top]; break;
      }
    }
    return stack[0];
  }

  bool holds(const BoundPredicate& p, const std::uint32_t* rows) const {
    auto num = [&](const BoundOperand& o) {
      if (auto* c = std::get_if<BoundColumn>(&o)) return number(*c, rows[c->pos]);
      return std::get<double>(o);
    };
    auto txt = [&](const BoundOperand& o) -> const std::string& {
      if (auto* c = std::get_if<BoundColumn>(&o)) return text(*c, rows[c->pos]);
      return std::get<std::string>(o);
    };
    if (is_text(p.lhs)) return compare(txt(p.lhs).compare(txt(p.rhs)), p.op);
    double a = num(p.lhs), b = num(p.rhs);
    return compare(a < b ? -1 : (a > b ? 1 : 0), p.op);
  }

  static bool is_text(const BoundOperand& o) {
    if (auto* c = std::get_if<BoundColumn>(&o)) return c->type == ColumnType::text;
    return std::holds_alternative<std::string>(o);
  }

  friend BoundQuery bind(const QuerySpec& spec, const DatabaseInstance& db);

 private:
  static constexpr std::size_t kMaxStack = 64;

  static bool compare(int cmp, CompareOp op) {
    switch (op) {
      case CompareOp::eq: return cmp == 0;
      case CompareOp::ne: return cmp != 0;
      case CompareOp::lt: return cmp < 0;
      case CompareOp::le: return cmp <= 0;
      case CompareOp::gt: return cmp > 0;
      case CompareOp::ge: return cmp >= 0;
    }
    return false;
  }

  const DatabaseInstance* db_ = nullptr;
  std::vector<std::size_t> rel_;
  std::vector<std::size_t> canonical_;
  std::vector<std::vector<BoundPredicate>> filters_;
  std::vector<BoundJoin> joins_;
  std::vector<BoundPredicate> cross_;
  std::vector<TermOp> program_;
  AggregateKind kind_ = AggregateKind::count;
  bool never_true_ = false;
};

/// Resolves names and types; throws ValidationError on anything that does not bind.
inline BoundQuery bind(const QuerySpec& spec, const DatabaseInstance& db) {
  BoundQuery q;
  q.db_ = &db;
  q.kind_ = spec.aggregate.kind;
  if (spec.relations.size() > 64) throw ValidationError("at most 64 relations per query");
  for (const auto& r : spec.relations) {
    auto idx = db.find(r.name);
    if (!idx) throw ValidationError("query references unknown relation '" + r.name + "'");
    if (std::find(q.rel_.begin(), q.rel_.end(), *idx) != q.rel_.end())
      throw ValidationError("relation '" + r.name + "' listed twice; self-joins are not supported");
    q.rel_.push_back(*idx);
  }
  q.canonical_.resize(q.rel_.size());
  std::iota(q.canonical_.begin(), q.canonical_.end(), std::size_t{0});
  std::sort(q.canonical_.begin(), q.canonical_.end(), [&](auto a, auto b) { return q.rel_[a] < q.rel_[b]; });
  q.filters_.resize(q.rel_.size());

  auto resolve = [&](const ColumnRef& ref) {
    for (std::size_t pos = 0; pos < spec.relations.size(); ++pos) {
      const auto& r = spec.relations[pos];
      if (ref.relation == r.alias || ref.relation == r.name) {
        const Relation& rel = db.relation(q.rel_[pos]);
        auto col = rel.column_index(ref.column);
        if (!col) throw ValidationError("relation '" + r.name + "' has no column '" + ref.column + "'");
        return BoundColumn{pos, *col, rel.columns()[*col].type};
      }
    }
    throw ValidationError("column reference '" + ref.relation + "." + ref.column + "' names no listed relation");
  };

  // Literals take the type of the column they are compared with.
  auto bind_literal = [&](const Operand& lit, const std::optional<BoundColumn>& other) -> BoundOperand {
    if (auto* d = std::get_if<double>(&lit)) {
      if (other && other->type == ColumnType::text)
        throw ValidationError("numeric literal compared with text column");
      return *d;
    }
    const auto& s = std::get<std::string>(lit);
    if (!other || other->type == ColumnType::text) return s;
    if (other->type == ColumnType::date) return static_cast<double>(parse_date(s));
    throw ValidationError("text literal '" + s + "' compared with numeric column");
  };

  auto add_predicate = [&](const Operand& lhs, CompareOp op, const Operand& rhs) {
    std::optional<BoundColumn> lc, rc;
    if (auto* c = std::get_if<ColumnRef>(&lhs)) lc = resolve(*c);
    if (auto* c = std::get_if<ColumnRef>(&rhs)) rc = resolve(*c);
    BoundPredicate p;
    p.op = op;
    p.lhs = lc ? BoundOperand(*lc) : bind_literal(lhs, rc);
    p.rhs = rc ? BoundOperand(*rc) : bind_literal(rhs, lc);
    if (BoundQuery::is_text(p.lhs) != BoundQuery::is_text(p.rhs))
      throw ValidationError("comparison mixes text and numeric operands");
    if (lc) p.positions |= std::uint64_t{1} << lc->pos;
    if (rc) p.positions |= std::uint64_t{1} << rc->pos;
    if (!lc && !rc) {
      if (!q.holds(p, nullptr)) q.never_true_ = true;
    } else if (lc && rc && lc->pos != rc->pos && op == CompareOp::eq) {
      q.joins_.push_back({*lc, *rc});
    } else if (std::popcount(p.positions) == 1) {
      q.filters_[lc ? lc->pos : rc->pos].push_back(std::move(p));
    } else {
      q.cross_.push_back(std::move(p));
    }
  };

  for (const auto& e : spec.equijoins) add_predicate(e.left, CompareOp::eq, e.right);
  for (const auto& p : spec.predicates) add_predicate(p.lhs, p.op, p.rhs);

  if (spec.aggregate.kind == AggregateKind::sum) {
    if (!spec.aggregate.expr) throw ValidationError("SUM aggregate needs an expression");
    std::size_t depth = 0, max_depth = 0;
    std::function<void(const ArithExpr&)> emit = [&](const ArithExpr& e) {
      using K = ArithExpr::Kind;
      using O = BoundQuery::TermOp::Kind;
      for (const auto& a : e.args) emit(a);
      switch (e.kind) {
        case K::column: {
          auto c = resolve(e.column);
          if (!is_numeric(c.type))
            throw ValidationError("arithmetic on non-numeric column " + e.column.relation + "." + e.column.column);
          q.program_.push_back({O::column, c.pos, c.column, 0});
          ++depth;
          break;
        }
        case K::constant: q.program_.push_back({O::constant, 0, 0, e.value}); ++depth; break;
        case K::negate: q.program_.push_back({O::negate}); break;
        case K::add: q.program_.push_back({O::add}); --depth; break;
        case K::sub: q.program_.push_back({O::sub}); --depth; break;
        case K::mul: q.program_.push_back({O::mul}); --depth; break;
      }
      max_depth = std::max(max_depth, depth);
    };
    emit(*spec.aggregate.expr);
    if (max_depth > BoundQuery::kMaxStack) throw ValidationError("aggregate expression nests too deeply");
  }
  return q;
}

/// Satisfying join combinations: `rows` is flat with stride `arity`, in canonical order.
struct JoinResult {
  std::size_t arity = 0;
  std::vector<std::uint32_t> rows;

  std::size_t size() const { return arity ? rows.size() / arity : 0; }
  const std::uint32_t* combination(std::size_t i) const { return rows.data() + i * arity; }
};

namespace detail {

inline std::uint64_t mix_hash(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

inline std::uint64_t hash_value(const BoundQuery& q, const BoundColumn& c, std::size_t row) {
  if (c.type == ColumnType::text) return std::hash<std::string>{}(q.text(c, row));
  double v = q.number(c, row);
  if (v == 0) v = 0;  // -0.0 and 0.0 join
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return bits;
}

inline bool same_value(const BoundQuery& q, const BoundColumn& a, std::size_t ra, const BoundColumn& b,
                       std::size_t rb) {
  if (a.type == ColumnType::text) return q.text(a, ra) == q.text(b, rb);
  return q.number(a, ra) == q.number(b, rb);
}

}  // namespace detail

/// Enumerates every combination of rows (one per query relation) that survives the mask
/// and satisfies all joins and predicates. Uses hash equijoins and post-filters the rest.
inline JoinResult enumerate_joins(const BoundQuery& q, const Mask& mask, bool stop_at_first = false) {
  const std::size_t r = q.arity();
  JoinResult out;
  out.arity = r;
  if (q.never_true()) return out;

  for (const auto& j : q.joins())
    if ((j.left.type == ColumnType::text) != (j.right.type == ColumnType::text))
      throw ValidationError("equijoin compares text with numeric column");

  std::vector<std::vector<std::uint32_t>> cand(r);
  std::vector<std::uint32_t> probe(r, 0);
  for (std::size_t pos = 0; pos < r; ++pos) {
    std::size_t rel = q.relation(pos);
    std::size_t n = q.instance().relation(rel).size();
    for (std::size_t row = 0; row < n; ++row) {
      if (!mask.contains(rel, row)) continue;
      probe[pos] = static_cast<std::uint32_t>(row);
      bool ok = true;
      for (const auto& f : q.filters()[pos])
        if (!q.holds(f, probe.data())) {
          ok = false;
          break;
        }
      if (ok) cand[pos].push_back(static_cast<std::uint32_t>(row));
    }
    if (cand[pos].empty()) return out;
  }

  std::uint64_t bound = 0;
  std::vector<std::uint32_t> partial;
  std::size_t count = 0;

  auto connected = [&](std::size_t pos) {
    for (const auto& j : q.joins()) {
      if (j.left.pos == pos && (bound >> j.right.pos & 1)) return true;
      if (j.right.pos == pos && (bound >> j.left.pos & 1)) return true;
    }
    return false;
  };

  for (std::size_t step = 0; step < r; ++step) {
    // Prefer the smallest relation connected to what is already bound.
    std::size_t next = r;
    bool next_connected = false;
    for (std::size_t pos = 0; pos < r; ++pos) {
      if (bound >> pos & 1) continue;
      bool c = step > 0 && connected(pos);
      if (next == r || (c && !next_connected) || (c == next_connected && cand[pos].size() < cand[next].size())) {
        next = pos;
        next_connected = c;
      }
    }

    std::vector<std::uint32_t> grown;
    std::size_t grown_count = 0;
    auto emit = [&](const std::uint32_t* base, std::uint32_t row) {
      std::size_t at = grown.size();
      if (base)
        grown.insert(grown.end(), base, base + r);
      else
        grown.resize(at + r, 0);
      grown[at + next] = row;
      ++grown_count;
    };

    if (step == 0) {
      for (auto row : cand[next]) emit(nullptr, row);
    } else {
      std::vector<std::pair<BoundColumn, BoundColumn>> keyed;  // (column at next, column already bound)
      for (const auto& j : q.joins()) {
        if (j.left.pos == next && (bound >> j.right.pos & 1)) keyed.push_back({j.left, j.right});
        if (j.right.pos == next && (bound >> j.left.pos & 1)) keyed.push_back({j.right, j.left});
      }
      if (keyed.empty()) {
        for (std::size_t i = 0; i < count; ++i)
          for (auto row : cand[next]) emit(partial.data() + i * r, row);
      } else {
        std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> table;
        table.reserve(cand[next].size());
        for (auto row : cand[next]) {
          std::uint64_t h = 0;
          for (const auto& [mine, _] : keyed) h = detail::mix_hash(h, detail::hash_value(q, mine, row));
          table[h].push_back(row);
        }
        for (std::size_t i = 0; i < count; ++i) {
          const std::uint32_t* base = partial.data() + i * r;
          std::uint64_t h = 0;
          for (const auto& [_, theirs] : keyed)
            h = detail::mix_hash(h, detail::hash_value(q, theirs, base[theirs.pos]));
          auto it = table.find(h);
          if (it == table.end()) continue;
          for (auto row : it->second) {
            bool eq = true;
            for (const auto& [mine, theirs] : keyed)
              if (!detail::same_value(q, mine, row, theirs, base[theirs.pos])) {
                eq = false;
                break;
              }
            if (eq) emit(base, row);
          }
        }
      }
    }

    bound |= std::uint64_t{1} << next;

    // Residual predicates and joins that just became fully bound.
    std::vector<const BoundPredicate*> now_cross;
    for (const auto& p : q.cross())
      if ((p.positions & bound) == p.positions && (p.positions >> next & 1)) now_cross.push_back(&p);
    std::vector<const BoundJoin*> now_joins;
    for (const auto& j : q.joins()) {
      bool touches = j.left.pos == next || j.right.pos == next;
      bool both = (bound >> j.left.pos & 1) && (bound >> j.right.pos & 1);
      if (touches && both) now_joins.push_back(&j);
    }
    if (!now_cross.empty() || !now_joins.empty()) {
      std::size_t kept = 0;
      for (std::size_t i = 0; i < grown_count; ++i) {
        const std::uint32_t* c = grown.data() + i * r;
        bool ok = true;
        for (auto* p : now_cross)
          if (!q.holds(*p, c)) {
            ok = false;
            break;
          }
        for (auto* j : now_joins)
          if (ok && !detail::same_value(q, j->left, c[j->left.pos], j->right, c[j->right.pos])) ok = false;
        if (ok) {
          if (kept != i) std::copy(c, c + r, grown.data() + kept * r);
          ++kept;
        }
      }
      grown.resize(kept * r);
      grown_count = kept;
    }

    partial = std::move(grown);
    count = grown_count;
    if (count == 0) return out;
  }

  if (stop_at_first) {
    partial.resize(r);
    out.rows = std::move(partial);
    return out;
  }

  // Canonical order: lexicographic by row, positions taken in instance relation order.
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& canon = q.canonical_order();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::uint32_t* x = partial.data() + a * r;
    const std::uint32_t* y = partial.data() + b * r;
    for (auto pos : canon)
      if (x[pos] != y[pos]) return x[pos] < y[pos];
    return false;
  });
  out.rows.resize(count * r);
  for (std::size_t i = 0; i < count; ++i)
    std::copy(partial.data() + order[i] * r, partial.data() + order[i] * r + r, out.rows.data() + i * r);
  return out;
}

/// Aggregate over all qualifying combinations of masked rows. SUM of nothing is 0.
inline double evaluate(const BoundQuery& q, const Mask& mask) {
  if (q.kind() == AggregateKind::exists) return enumerate_joins(q, mask, true).size() > 0 ? 1.0 : 0.0;
  JoinResult joined = enumerate_joins(q, mask);
  if (q.kind() == AggregateKind::count) return static_cast<double>(joined.size());
  double sum = 0;
  for (std::size_t i = 0; i < joined.size(); ++i) sum += q.term(joined.combination(i));
  return sum;
}

inline double evaluate(const QuerySpec& spec, const DatabaseInstance& db, const Mask& mask) {
  return evaluate(bind(spec, db), mask);
}

}  // namespace relshap
