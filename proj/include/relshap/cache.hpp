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

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <utility>

#include "coalition.hpp"

namespace relshap {

inline constexpr std::size_t kDefaultCacheCapacity = std::size_t{1} << 20;

/// LRU map from coalition to v(S). Capacity 0 disables storage.
class CoalitionCache {
 public:
  explicit CoalitionCache(std::size_t capacity = kDefaultCacheCapacity) : capacity_(capacity) {}

  CoalitionCache(const CoalitionCache&) = delete;
  CoalitionCache& operator=(const CoalitionCache&) = delete;

  std::size_t capacity() const { return capacity_; }
  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return index_.size();
  }

  std::optional<double> lookup(const Coalition& s) {
    if (capacity_ == 0) {
      ++misses_;
      return std::nullopt;
    }
    std::lock_guard lock(mu_);
    auto it = index_.find(s);
    if (it == index_.end()) {
      ++misses_;
      return std::nullopt;
    }
    order_.splice(order_.begin(), order_, it->second);
    ++hits_;
    return it->second->second;
  }

  void store(const Coalition& s, double value) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mu_);
    auto it = index_.find(s);
    if (it != index_.end()) {
      // Lost race: the value is identical, just refresh recency.
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(s, value);
    index_.emplace(s, order_.begin());
    if (index_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

 private:
  using Entry = std::pair<Coalition, double>;

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Entry> order_;
  std::unordered_map<Coalition, std::list<Entry>::iterator, CoalitionHash> index_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

/// v(S) through the cache: a hit returns the stored value, a miss evaluates and stores.
template <typename Evaluator>
double cached_eval(CoalitionCache& cache, const Evaluator& evaluate, const Coalition& s) {
  if (auto hit = cache.lookup(s)) return *hit;
  double v = evaluate(s);
  cache.store(s, v);
  return v;
}

}  // namespace relshap
