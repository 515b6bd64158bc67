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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coalition.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "provenance.hpp"
#include "query.hpp"
#include "view.hpp"

namespace relshap {

enum class EvaluatorKind { naive, compiled };

inline std::string_view to_string(EvaluatorKind kind) {
  return kind == EvaluatorKind::naive ? "naive" : "compiled";
}

struct GameOptions {
  EvaluatorKind evaluator = EvaluatorKind::compiled;
  std::size_t view_row_cap = kDefaultViewRowCap;
  std::size_t exact_cap = 24;  // largest n the subset-form oracles accept
};

/// Cooperative game induced by a query: players are the lineage tuples and
/// v(S) is the query evaluated with S plus every exogenous tuple present.
/// Read-only after construction.
class GameContext {
 public:
  GameContext(const DatabaseInstance& db, QuerySpec spec, GameOptions options = {})
      : db_(&db), spec_(std::move(spec)), query_(bind(spec_, db)), options_(options),
        partition_(compute_lineage(query_)) {
    if (options_.evaluator == EvaluatorKind::compiled) {
      view_ = std::make_unique<CompiledView>(compile_view(query_, options_.view_row_cap));
      player_view_ = PlayerView(*view_, db, partition_);
    }
    empty_value_ = evaluate(Coalition(partition_.size()));
  }

  GameContext(const GameContext&) = delete;
  GameContext& operator=(const GameContext&) = delete;

  const DatabaseInstance& instance() const { return *db_; }
  const QuerySpec& spec() const { return spec_; }
  const BoundQuery& query() const { return query_; }
  const EndogenousPartition& partition() const { return partition_; }
  const GameOptions& options() const { return options_; }
  EvaluatorKind evaluator() const { return options_.evaluator; }
  const CompiledView* view() const { return view_.get(); }
  std::size_t players() const { return partition_.size(); }

  /// Mask with each endogenous relation restricted to the members of `s`.
  Mask mask_for(const Coalition& s) const {
    Mask mask(*db_);
    for (std::size_t p = 0; p < partition_.relation_count(); ++p) {
      const auto& part = partition_.parts()[p];
      std::vector<std::uint8_t> present(db_->relation(part.relation).size(), 0);
      std::size_t begin = partition_.part_begin(p), end = partition_.part_begin(p + 1);
      for (std::size_t i = begin; i < end; ++i)
        if (s.contains(i)) present[db_->locate(partition_.players()[i])->second] = 1;
      mask.restrict_rows(*db_, part.relation, std::move(present));
    }
    return mask;
  }

  /// One evaluator call, no caching. The naive path is always available; the
  /// compiled one only when the context was built with it.
  double evaluate(const Coalition& s, EvaluatorKind kind) const {
    if (kind == EvaluatorKind::compiled) {
      if (!view_) throw ValidationError("compiled evaluator requested but no view was compiled");
      return player_view_.evaluate(s);
    }
    return relshap::evaluate(query_, mask_for(s));
  }

  double evaluate(const Coalition& s) const { return evaluate(s, options_.evaluator); }

  /// v(S); v(∅) comes from the value computed at construction.
  double value(const Coalition& s, EvaluatorKind kind) const {
    if (s.empty()) return empty_value_;
    return evaluate(s, kind);
  }

  double value(const Coalition& s) const { return value(s, options_.evaluator); }

  double empty_value() const { return empty_value_; }

  double full_value() const {
    Coalition all(partition_.size());
    for (std::size_t i = 0; i < all.universe(); ++i) all.insert(i);
    return value(all);
  }

  std::size_t player_index(TupleId t) const {
    auto idx = partition_.index_of(t);
    if (!idx) throw DomainError("tuple " + db_->label(t) + " is not an endogenous player");
    return *idx;
  }

 private:
  const DatabaseInstance* db_;
  QuerySpec spec_;
  BoundQuery query_;
  GameOptions options_;
  EndogenousPartition partition_;
  std::unique_ptr<CompiledView> view_;
  PlayerView player_view_;
  double empty_value_ = 0;
};

/// s!(n-s-1)!/n!, built from the ratio product so no factorial is ever formed.
inline double shapley_weight(std::size_t s, std::size_t n) {
  if (n == 0 || s >= n) throw DomainError("shapley_weight needs 0 <= s < n");
  std::size_t k = std::min(s, n - 1 - s);
  double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 1; i <= k; ++i) w *= static_cast<double>(i) / static_cast<double>(n - i);
  return w;
}

/// Δ_t(S) = v(S ∪ {t}) − v(S) for t ∉ S.
inline double marginal(const GameContext& ctx, const Coalition& s, TupleId t) {
  std::size_t ti = ctx.player_index(t);
  if (s.universe() != ctx.players()) throw DomainError("coalition built over a different player set");
  if (s.contains(ti)) throw DomainError("target tuple is already in the coalition");
  Coalition with = s;
  with.insert(ti);
  return ctx.value(with) - ctx.value(s);
}

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// Per-size sums of Δ over all subsets of the other players, in Gray-code order so
// consecutive coalitions differ by one player. The subset space is cut into a fixed
// number of chunks, so results do not depend on the worker count.
inline std::vector<double> marginal_sums_by_size(const GameContext& ctx, TupleId t, std::size_t workers) {
  const std::size_t n = ctx.players();
  const std::size_t ti = ctx.player_index(t);
  if (n > ctx.options().exact_cap || n > 62)
    throw CapExceeded("exact enumeration over n = " + std::to_string(n) + " players exceeds the cap of " +
                      std::to_string(std::min<std::size_t>(ctx.options().exact_cap, 62)));
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i)
    if (i != ti) others.push_back(i);
  const std::uint64_t total = std::uint64_t{1} << others.size();
  const std::size_t chunks = static_cast<std::size_t>(std::min<std::uint64_t>(total, 256));
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(n, 0.0));

  parallel_for(chunks, workers, [&](std::size_t c) {
    std::uint64_t begin = total * c / chunks, end = total * (c + 1) / chunks;
    Coalition s(n);
    std::uint64_t gray = begin ^ (begin >> 1);
    for (std::size_t b = 0; b < others.size(); ++b)
      if (gray >> b & 1) s.insert(others[b]);
    std::size_t size = static_cast<std::size_t>(std::popcount(gray));
    auto& sums = partial[c];
    for (std::uint64_t i = begin; i < end; ++i) {
      if (i != begin) {
        std::size_t bit = static_cast<std::size_t>(std::countr_zero(i));
        s.flip(others[bit]);
        size = s.contains(others[bit]) ? size + 1 : size - 1;
      }
      Coalition with = s;
      with.insert(ti);
      sums[size] += ctx.value(with) - ctx.value(s);
    }
  });

  std::vector<double> sums(n, 0.0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < n; ++k) sums[k] += p[k];
  return sums;
}

}  // namespace detail

/// Subset-form Shapley value by full enumeration of the 2^(n-1) coalitions without t.
inline double exact_shapley(const GameContext& ctx, TupleId t, std::size_t workers = 1) {
  if (!is_endogenous(ctx.partition(), t)) return 0.0;
  auto sums = detail::marginal_sums_by_size(ctx, t, workers);
  const std::size_t n = ctx.players();
  double phi = 0;
  for (std::size_t k = 0; k < n; ++k) phi += shapley_weight(k, n) * sums[k];
  return phi;
}

/// Banzhaf value: the unweighted mean of Δ over the same 2^(n-1) coalitions.
inline double exact_banzhaf(const GameContext& ctx, TupleId t, std::size_t workers = 1) {
  if (!is_endogenous(ctx.partition(), t)) return 0.0;
  auto sums = detail::marginal_sums_by_size(ctx, t, workers);
  double total = 0;
  for (double v : sums) total += v;
  return std::ldexp(total, -static_cast<int>(ctx.players() - 1));
}

inline constexpr std::size_t kPermutationCap = 9;

/// Permutation-form Shapley value: mean of Δ over all n! orderings of N.
inline double exact_shapley_perm(const GameContext& ctx, TupleId t) {
  if (!is_endogenous(ctx.partition(), t)) return 0.0;
  const std::size_t n = ctx.players();
  if (n > kPermutationCap)
    throw CapExceeded("permutation enumeration needs n <= " + std::to_string(kPermutationCap) + ", got " +
                      std::to_string(n));
  const std::size_t ti = ctx.player_index(t);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double total = 0;
  std::uint64_t perms = 0;
  do {
    Coalition prefix(n);
    for (auto p : order) {
      if (p == ti) break;
      prefix.insert(p);
    }
    Coalition with = prefix;
    with.insert(ti);
    total += ctx.value(with) - ctx.value(prefix);
    ++perms;
  } while (std::next_permutation(order.begin(), order.end()));
  return total / static_cast<double>(perms);
}

}  // namespace relshap
