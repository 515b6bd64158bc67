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
#include <map>
#include <vector>

#include "errors.hpp"
#include "evaluate.hpp"
#include "provenance.hpp"
#include "strata.hpp"

namespace relshap {

/// Static pruning from the join graph alone: with an inner join over every query
/// relation, a coalition missing all tuples of some relation other than t's own has
/// no complete witness with or without t, so Δ ≡ 0 on that stratum.
inline std::vector<bool> prune_strata(const std::vector<RelationVector>& strata, const BoundQuery& query,
                                      const EndogenousPartition& partition, TupleId t) {
  auto ti = partition.index_of(t);
  if (!ti) throw DomainError("target tuple is not an endogenous player");
  const std::size_t target_part = partition.part_of(*ti);
  std::vector<bool> required(partition.relation_count(), false);
  for (std::size_t p = 0; p < partition.relation_count(); ++p) {
    const auto& rels = query.relations();
    required[p] = std::find(rels.begin(), rels.end(), partition.parts()[p].relation) != rels.end();
  }
  std::vector<bool> pruned(strata.size(), false);
  for (std::size_t i = 0; i < strata.size(); ++i)
    for (std::size_t p = 0; p < required.size(); ++p)
      if (required[p] && p != target_part && strata[i].counts[p] == 0) {
        pruned[i] = true;
        break;
      }
  return pruned;
}

/// A coarsened stratum: the member relation vectors whose per-relation counts fall
/// into one combination of bins.
struct StratumGroup {
  std::vector<std::size_t> bins;     // bin index per relation
  std::vector<std::size_t> members;  // indices into the strata list
};

/// Bin of value s when {0..upper} is cut into `bins` contiguous near-equal runs.
inline std::size_t value_bin(std::size_t s, std::size_t upper, std::size_t bins) {
  return s * bins / (upper + 1);
}

/// Splits each relation's range 0..n'_i into min(q, n'_i + 1) contiguous bins and
/// groups the given vectors by their bin combination (lexicographic group order).
inline std::vector<StratumGroup> bin_strata(const std::vector<RelationVector>& strata,
                                            const std::vector<std::size_t>& sizes, std::size_t q) {
  if (q == 0) throw ValidationError("bin count must be at least 1");
  std::vector<std::size_t> bins(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) bins[i] = std::min(q, sizes[i] + 1);
  std::map<std::vector<std::size_t>, StratumGroup> groups;
  for (std::size_t idx = 0; idx < strata.size(); ++idx) {
    std::vector<std::size_t> key(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) key[i] = value_bin(strata[idx].counts[i], sizes[i], bins[i]);
    auto& g = groups[key];
    g.bins = key;
    g.members.push_back(idx);
  }
  std::vector<StratumGroup> out;
  out.reserve(groups.size());
  for (auto& [_, g] : groups) out.push_back(std::move(g));
  return out;
}

}  // namespace relshap
