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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coalition.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "provenance.hpp"

namespace relshap {

/// Join witnesses of a query over the full instance, one row per satisfying
/// combination, with that combination's aggregate term. Rows are in the same
/// canonical order the naive evaluator sums in, so filtered sums agree bit for bit.
class CompiledView {
 public:
  std::size_t rows() const { return terms_.size(); }
  std::size_t arity() const { return relations_.size(); }
  AggregateKind kind() const { return kind_; }

  /// Instance relation index of each witness slot.
  const std::vector<std::size_t>& relations() const { return relations_; }
  std::span<const TupleId> witness(std::size_t row) const {
    return {witnesses_.data() + row * arity(), arity()};
  }
  double term(std::size_t row) const { return terms_[row]; }
  std::span<const double> terms() const { return terms_; }

  /// Evaluates the aggregate over rows whose witnesses all pass the mask.
  double evaluate(const DatabaseInstance& db, const Mask& mask) const {
    std::vector<std::size_t> restricted;
    for (std::size_t slot = 0; slot < arity(); ++slot)
      if (mask.restricted(relations_[slot])) restricted.push_back(slot);
    double sum = 0;
    for (std::size_t row = 0; row < rows(); ++row) {
      auto w = witness(row);
      bool present = true;
      for (auto slot : restricted) {
        auto loc = db.locate(w[slot]);
        if (!mask.contains(loc->first, loc->second)) {
          present = false;
          break;
        }
      }
      if (!present) continue;
      if (kind_ == AggregateKind::exists) return 1.0;
      sum += terms_[row];
    }
    return sum;
  }

  friend CompiledView compile_view(const BoundQuery& q, std::size_t row_cap);

 private:
  std::vector<std::size_t> relations_;
  std::vector<TupleId> witnesses_;
  std::vector<double> terms_;
  AggregateKind kind_ = AggregateKind::count;
};

inline constexpr std::size_t kDefaultViewRowCap = std::size_t{1} << 24;

/// Runs the join once over the full instance and stores every witness with its term.
inline CompiledView compile_view(const BoundQuery& q, std::size_t row_cap = kDefaultViewRowCap) {
  const DatabaseInstance& db = q.instance();
  JoinResult all = enumerate_joins(q, Mask(db));
  if (all.size() > row_cap)
    throw CapExceeded("compiled view would hold " + std::to_string(all.size()) + " rows (cap " +
                      std::to_string(row_cap) + "); use the naive evaluator");
  CompiledView view;
  view.kind_ = q.kind();
  const auto& canon = q.canonical_order();
  for (auto pos : canon) view.relations_.push_back(q.relation(pos));
  view.witnesses_.reserve(all.size() * canon.size());
  view.terms_.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::uint32_t* c = all.combination(i);
    for (auto pos : canon) view.witnesses_.push_back(db.id(q.relation(pos), c[pos]));
    view.terms_.push_back(q.term(c));
  }
  return view;
}

inline double eval_compiled(const CompiledView& view, const DatabaseInstance& db, const Mask& mask) {
  return view.evaluate(db, mask);
}

/// A compiled view re-keyed by player index for coalition evaluation: each row keeps
/// only its endogenous witnesses; exogenous ones are always present.
class PlayerView {
 public:
  PlayerView() = default;

  PlayerView(const CompiledView& view, const DatabaseInstance& db, const EndogenousPartition& partition)
      : kind_(view.kind()), terms_(view.terms().begin(), view.terms().end()) {
    std::vector<std::size_t> slots;
    for (std::size_t slot = 0; slot < view.arity(); ++slot)
      if (db.relation(view.relations()[slot]).endogenous()) slots.push_back(slot);
    width_ = slots.size();
    players_.reserve(view.rows() * width_);
    for (std::size_t row = 0; row < view.rows(); ++row) {
      auto w = view.witness(row);
      for (auto slot : slots) {
        auto idx = partition.index_of(w[slot]);
        if (!idx) throw ValidationError("view witness outside the endogenous partition");
        players_.push_back(static_cast<std::uint32_t>(*idx));
      }
    }
  }

  std::size_t rows() const { return terms_.size(); }

  double evaluate(const Coalition& s) const {
    const auto& words = s.words();
    double sum = 0;
    const std::uint32_t* p = players_.data();
    for (std::size_t row = 0; row < terms_.size(); ++row, p += width_) {
      bool present = true;
      for (std::size_t k = 0; k < width_; ++k)
        if (!(words[p[k] >> 6] >> (p[k] & 63) & 1)) {
          present = false;
          break;
        }
      if (!present) continue;
      if (kind_ == AggregateKind::exists) return 1.0;
      sum += terms_[row];
    }
    return sum;
  }

 private:
  AggregateKind kind_ = AggregateKind::count;
  std::size_t width_ = 0;
  std::vector<std::uint32_t> players_;
  std::vector<double> terms_;
};

}  // namespace relshap
