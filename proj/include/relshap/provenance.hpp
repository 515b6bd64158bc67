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
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "evaluate.hpp"
#include "relcore.hpp"

namespace relshap {

/// The players N of an attribution game, grouped by endogenous relation.
/// Player indices run part by part, ids ascending within a part.
class EndogenousPartition {
 public:
  struct Part {
    std::size_t relation = 0;  // instance relation index
    std::string name;
    std::vector<TupleId> ids;
  };

  EndogenousPartition() = default;

  explicit EndogenousPartition(std::vector<Part> parts) : parts_(std::move(parts)) {
    for (std::size_t p = 0; p < parts_.size(); ++p) {
      auto& ids = parts_[p].ids;
      std::sort(ids.begin(), ids.end());
      starts_.push_back(players_.size());
      for (TupleId t : ids) {
        if (!index_.emplace(t.value, players_.size()).second)
          throw ValidationError("tuple id " + std::to_string(t.value) + " appears in two endogenous sets");
        players_.push_back(t);
        part_of_.push_back(p);
      }
    }
    starts_.push_back(players_.size());
  }

  const std::vector<Part>& parts() const { return parts_; }
  std::size_t relation_count() const { return parts_.size(); }
  std::size_t size() const { return players_.size(); }
  const std::vector<TupleId>& players() const { return players_; }

  std::optional<std::size_t> index_of(TupleId t) const {
    auto it = index_.find(t.value);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(TupleId t) const { return index_.count(t.value) != 0; }

  /// Part holding player `index`.
  std::size_t part_of(std::size_t index) const { return part_of_[index]; }

  /// First player index of part `p`; players of p are [part_begin(p), part_begin(p+1)).
  std::size_t part_begin(std::size_t p) const { return starts_[p]; }

 private:
  std::vector<Part> parts_;
  std::vector<TupleId> players_;
  std::vector<std::size_t> part_of_;
  std::vector<std::size_t> starts_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
};

/// Witness-based lineage: a tuple of an endogenous relation is a player iff it occurs in
/// at least one satisfying join combination over the full instance.
inline EndogenousPartition compute_lineage(const BoundQuery& q) {
  const DatabaseInstance& db = q.instance();
  JoinResult all = enumerate_joins(q, Mask(db));

  std::vector<std::size_t> positions;
  for (std::size_t pos = 0; pos < q.arity(); ++pos)
    if (db.relation(q.relation(pos)).endogenous()) positions.push_back(pos);
  std::sort(positions.begin(), positions.end(), [&](auto a, auto b) { return q.relation(a) < q.relation(b); });

  std::vector<EndogenousPartition::Part> parts;
  for (auto pos : positions) {
    std::size_t rel = q.relation(pos);
    std::vector<std::uint8_t> seen(db.relation(rel).size(), 0);
    for (std::size_t i = 0; i < all.size(); ++i) seen[all.combination(i)[pos]] = 1;
    EndogenousPartition::Part part{rel, db.relation(rel).name(), {}};
    for (std::size_t row = 0; row < seen.size(); ++row)
      if (seen[row]) part.ids.push_back(db.id(rel, row));
    parts.push_back(std::move(part));
  }
  return EndogenousPartition(std::move(parts));
}

inline EndogenousPartition compute_lineage(const QuerySpec& spec, const DatabaseInstance& db) {
  return compute_lineage(bind(spec, db));
}

/// Membership in N. Tuples outside it have Shapley value 0.
inline bool is_endogenous(const EndogenousPartition& partition, TupleId t) { return partition.contains(t); }

inline nlohmann::json partition_json(const EndogenousPartition& partition, const DatabaseInstance* db = nullptr) {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& part : partition.parts()) {
    nlohmann::json ids = nlohmann::json::array();
    nlohmann::json labels = nlohmann::json::array();
    for (TupleId t : part.ids) {
      ids.push_back(t.value);
      if (db) labels.push_back(db->label(t));
    }
    nlohmann::json entry = {{"relation", part.name}, {"count", part.ids.size()}, {"ids", ids}};
    if (db) entry["labels"] = labels;
    rels.push_back(std::move(entry));
  }
  return {{"relations", rels}, {"r", partition.relation_count()}, {"n", partition.size()}};
}

}  // namespace relshap
