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

#include <bit>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "provenance.hpp"

namespace relshap {

/// Subset of the players N, as a bit vector indexed by player index.
/// Two coalitions over the same N compare equal iff they hold the same players.
class Coalition {
 public:
  Coalition() = default;
  explicit Coalition(std::size_t universe) : universe_(universe), words_((universe + 63) / 64, 0) {}

  static Coalition from_ids(const EndogenousPartition& partition, std::span<const TupleId> ids) {
    Coalition c(partition.size());
    for (TupleId t : ids) {
      auto idx = partition.index_of(t);
      if (!idx) throw DomainError("tuple " + std::to_string(t.value) + " is not an endogenous player");
      c.insert(*idx);
    }
    return c;
  }

  std::size_t universe() const { return universe_; }
  bool contains(std::size_t i) const { return words_[i >> 6] >> (i & 63) & 1; }
  void insert(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void erase(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }
  void clear() { std::fill(words_.begin(), words_.end(), 0); }
  bool empty() const {
    for (auto w : words_)
      if (w) return false;
    return true;
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  std::vector<TupleId> ids(const EndogenousPartition& partition) const {
    std::vector<TupleId> out;
    for (std::size_t i = 0; i < universe_; ++i)
      if (contains(i)) out.push_back(partition.players()[i]);
    return out;
  }

  bool operator==(const Coalition&) const = default;

 private:
  std::size_t universe_ = 0;
  std::vector<std::uint64_t> words_;
};

struct CoalitionHash {
  std::size_t operator()(const Coalition& c) const {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ c.universe();
    for (auto w : c.words()) {
      h ^= w;
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace relshap
