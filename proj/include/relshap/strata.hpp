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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "coalition.hpp"
#include "errors.hpp"
#include "provenance.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace relshap {

/// Number of coalition members drawn from each endogenous relation.
struct RelationVector {
  std::vector<std::size_t> counts;

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  bool operator==(const RelationVector&) const = default;
  auto operator<=>(const RelationVector&) const = default;
};

inline std::string to_string(const RelationVector& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.counts.size(); ++i) s += (i ? "," : "") + std::to_string(v.counts[i]);
  return s + ")";
}

/// n'_i = |E_i|, minus one for the relation holding the target.
inline std::vector<std::size_t> reduced_sizes(const EndogenousPartition& partition, TupleId t) {
  auto ti = partition.index_of(t);
  if (!ti) throw DomainError("target tuple is not an endogenous player");
  std::vector<std::size_t> sizes;
  for (const auto& part : partition.parts()) sizes.push_back(part.ids.size());
  --sizes[partition.part_of(*ti)];
  return sizes;
}

inline constexpr std::size_t kStrataCap = 1'000'000;

/// Every vector of the grid ×_i {0..n'_i}, lexicographic with the first relation most significant.
inline std::vector<RelationVector> enumerate_strata(const std::vector<std::size_t>& sizes) {
  std::uint64_t cells = 1;
  for (auto s : sizes) {
    cells *= s + 1;
    if (cells > kStrataCap)
      throw CapExceeded("relation-vector grid exceeds " + std::to_string(kStrataCap) + " strata; use --bins");
  }
  std::vector<RelationVector> out;
  out.reserve(cells);
  RelationVector v{std::vector<std::size_t>(sizes.size(), 0)};
  while (true) {
    out.push_back(v);
    std::size_t i = sizes.size();
    while (i > 0) {
      --i;
      if (v.counts[i] < sizes[i]) {
        ++v.counts[i];
        break;
      }
      v.counts[i] = 0;
      if (i == 0) return out;
    }
    if (sizes.empty()) return out;
  }
}

inline std::vector<RelationVector> enumerate_strata(const EndogenousPartition& partition, TupleId t) {
  return enumerate_strata(reduced_sizes(partition, t));
}

inline BigCount binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigCount c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c *= n - k + i;
    c /= i;
  }
  return c;
}

/// ∏_i C(n'_i, s_i): the number of coalitions with this relation vector.
inline BigCount stratum_card(const RelationVector& v, const std::vector<std::size_t>& sizes) {
  if (v.counts.size() != sizes.size()) throw ValidationError("relation vector has wrong arity");
  BigCount card = 1;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (v.counts[i] > sizes[i]) throw ValidationError("relation vector out of bounds");
    card *= binomial(sizes[i], v.counts[i]);
  }
  return card;
}

/// Exact ratio of two big integers, rounded once to double.
inline double ratio_to_double(const BigCount& num, const BigCount& den) {
  return static_cast<double>(boost::multiprecision::cpp_rational(num, den));
}

/// π_v = (1/n) · ∏ C(n'_i, s_i) / C(n−1, |v|): the mass the Shapley weights put on
/// stratum v, so that Σ_v π_v · mean_v(Δ) is the Shapley value.
inline double stratum_prob(const RelationVector& v, const std::vector<std::size_t>& sizes, std::size_t n) {
  if (n == 0) throw DomainError("stratum_prob needs n >= 1");
  BigCount card = stratum_card(v, sizes);
  return ratio_to_double(card, binomial(n - 1, v.total()) * n);
}

/// Draws uniformly from the stratum: s_i distinct players from each E_i \ {t}.
inline void sample_coalition(const RelationVector& v, const EndogenousPartition& partition, std::size_t target,
                             Rng& rng, Coalition& out) {
  out.clear();
  const std::size_t target_part = partition.part_of(target);
  for (std::size_t p = 0; p < partition.relation_count(); ++p) {
    std::size_t begin = partition.part_begin(p);
    std::size_t pool = partition.part_begin(p + 1) - begin;
    bool skip_target = p == target_part;
    if (skip_target) --pool;
    std::size_t want = v.counts[p];
    if (want > pool) throw ValidationError("relation vector out of bounds");
    // Floyd's sampling of `want` distinct slots out of `pool`.
    auto player = [&](std::size_t slot) {
      std::size_t idx = begin + slot;
      if (skip_target && idx >= target) ++idx;
      return idx;
    };
    for (std::size_t j = pool - want; j < pool; ++j) {
      std::size_t r = static_cast<std::size_t>(uniform_index(rng, j));
      std::size_t candidate = player(r);
      if (out.contains(candidate))
        out.insert(player(j));
      else
        out.insert(candidate);
    }
  }
}

inline Coalition sample_coalition(const RelationVector& v, const EndogenousPartition& partition, TupleId t,
                                  Rng& rng) {
  auto ti = partition.index_of(t);
  if (!ti) throw DomainError("target tuple is not an endogenous player");
  Coalition out(partition.size());
  sample_coalition(v, partition, *ti, rng, out);
  return out;
}

/// Uniform size-k subset of N \ {t}.
inline void sample_sized_coalition(std::size_t k, std::size_t n, std::size_t target, Rng& rng, Coalition& out) {
  out.clear();
  const std::size_t pool = n - 1;
  auto player = [&](std::size_t slot) { return slot >= target ? slot + 1 : slot; };
  for (std::size_t j = pool - k; j < pool; ++j) {
    std::size_t candidate = player(static_cast<std::size_t>(uniform_index(rng, j)));
    if (out.contains(candidate))
      out.insert(player(j));
    else
      out.insert(candidate);
  }
}

// ---------------------------------------------------------------------------
// Allocation

struct AllocationResult {
  std::vector<std::size_t> counts;
  std::size_t floor_used = 0;
  bool floor_reduced = false;
};

/// Splits `budget` across eligible strata in proportion to `weights`, with at least
/// `floor` per eligible stratum. Strata whose proportional share falls below the floor
/// are pinned to it and the rest is re-split; integer counts come from largest remainder
/// (ties to the lower index). If no eligible weight is positive the split is equal.
/// When the budget cannot pay the floor everywhere, the floor drops to what fits and
/// the leftover units go to the least-sampled strata (`seen`), then the heaviest.
inline AllocationResult allocate(std::span<const double> weights, const std::vector<bool>& eligible,
                                 std::size_t budget, std::size_t floor, std::span<const std::uint64_t> seen = {}) {
  const std::size_t k = weights.size();
  AllocationResult res;
  res.counts.assign(k, 0);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < k; ++i)
    if (eligible[i]) active.push_back(i);
  if (active.empty() || budget == 0) return res;
  if (floor * active.size() > budget) {
    res.floor_reduced = true;
    res.floor_used = budget / active.size();
    auto order = active;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      std::uint64_t sa = seen.empty() ? 0 : seen[a], sb = seen.empty() ? 0 : seen[b];
      if (sa != sb) return sa < sb;
      return weights[a] > weights[b];
    });
    for (auto i : active) res.counts[i] = res.floor_used;
    for (std::size_t j = 0; j < budget - res.floor_used * active.size(); ++j) ++res.counts[order[j]];
    return res;
  }
  res.floor_used = floor;

  std::vector<bool> pinned(k, false);
  std::vector<double> ideal(k, 0.0);
  while (true) {
    std::size_t pinned_count = 0;
    double mass = 0;
    std::size_t free_count = 0;
    for (auto i : active) {
      if (pinned[i])
        ++pinned_count;
      else {
        mass += weights[i];
        ++free_count;
      }
    }
    double rest = static_cast<double>(budget - floor * pinned_count);
    bool changed = false;
    for (auto i : active) {
      if (pinned[i]) continue;
      ideal[i] = mass > 0 ? rest * weights[i] / mass : rest / static_cast<double>(free_count);
      if (ideal[i] < static_cast<double>(floor)) {
        pinned[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }

  std::size_t assigned = 0;
  std::vector<std::pair<double, std::size_t>> remainders;
  for (auto i : active) {
    if (pinned[i]) {
      res.counts[i] = floor;
    } else {
      double whole = std::floor(ideal[i]);
      res.counts[i] = std::max(floor, static_cast<std::size_t>(whole));
      remainders.push_back({ideal[i] - whole, i});
    }
    assigned += res.counts[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < budget; ++j) {
    std::size_t i = remainders.empty() ? active[j % active.size()] : remainders[j % remainders.size()].second;
    ++res.counts[i];
    ++assigned;
  }
  // Floating rounding can overshoot by a unit; take it back from the largest counts.
  while (assigned > budget) {
    auto it = std::max_element(active.begin(), active.end(),
                               [&](auto a, auto b) { return res.counts[a] < res.counts[b]; });
    --res.counts[*it];
    --assigned;
  }
  return res;
}

namespace detail {

/// Cardinalities as doubles, scaled so the largest fits comfortably.
inline std::vector<double> card_weights(const std::vector<StratumStats>& strata) {
  std::size_t top = 0;
  for (const auto& s : strata)
    if (s.card > 0) top = std::max<std::size_t>(top, boost::multiprecision::msb(s.card));
  std::size_t shift = top > 960 ? top - 960 : 0;
  std::vector<double> w;
  w.reserve(strata.size());
  for (const auto& s : strata) w.push_back(static_cast<double>(BigCount(s.card >> shift)));
  return w;
}

inline std::vector<std::uint64_t> seen(const std::vector<StratumStats>& strata) {
  std::vector<std::uint64_t> c;
  for (const auto& s : strata) c.push_back(s.count);
  return c;
}

inline std::vector<bool> eligible(const std::vector<StratumStats>& strata) {
  std::vector<bool> e;
  for (const auto& s : strata) e.push_back(!s.pruned && !s.exhausted);
  return e;
}

}  // namespace detail

/// Budget split proportional to stratum cardinality; pruned strata get nothing.
inline AllocationResult proportional_allocation(const std::vector<StratumStats>& strata, std::size_t budget,
                                                std::size_t floor = 1) {
  return allocate(detail::card_weights(strata), detail::eligible(strata), budget, floor, detail::seen(strata));
}

/// Neyman rule: shares proportional to card · σ̂. Strata with fewer than two samples
/// borrow the largest observed σ̂; if every σ̂ is zero this is the proportional rule.
inline AllocationResult neyman_allocation(const std::vector<StratumStats>& strata, std::size_t budget,
                                          std::size_t floor = 1) {
  auto cards = detail::card_weights(strata);
  auto elig = detail::eligible(strata);
  double max_sd = 0;
  for (std::size_t i = 0; i < strata.size(); ++i)
    if (elig[i] && strata[i].count >= 2) max_sd = std::max(max_sd, strata[i].stddev());
  if (max_sd == 0) return allocate(cards, elig, budget, floor, detail::seen(strata));
  std::vector<double> w(strata.size(), 0.0);
  for (std::size_t i = 0; i < strata.size(); ++i) {
    if (!elig[i]) continue;
    double sd = strata[i].count >= 2 ? strata[i].stddev() : max_sd;
    w[i] = cards[i] * sd;
  }
  return allocate(w, elig, budget, floor, detail::seen(strata));
}

}  // namespace relshap
