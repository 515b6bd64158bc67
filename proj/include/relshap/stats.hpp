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

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "errors.hpp"

namespace relshap {

using BigCount = boost::multiprecision::cpp_int;

/// Running moments of the sampled values of one stratum, plus the stratum's
/// fixed weight (prob), population size (card) and pruning flag.
struct StratumStats {
  std::vector<std::size_t> key;  // relation vector, {size} for size strata, {} for MCS
  std::uint64_t count = 0;
  double mean = 0;
  double m2 = 0;
  double prob = 0;
  BigCount card = 0;
  bool pruned = false;
  bool exhausted = false;  // every coalition was evaluated exactly once (dedup mode)
  double estimate = 0;     // stratum mean used by the combined estimator

  void add(double x) {
    ++count;
    double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  double variance() const { return count > 1 ? std::max(0.0, m2 / static_cast<double>(count - 1)) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }

  /// Same key and weights, no samples.
  StratumStats empty_copy() const {
    StratumStats s;
    s.key = key;
    s.prob = prob;
    s.card = card;
    s.pruned = pruned;
    s.exhausted = exhausted;
    return s;
  }
};

/// Pooled moments of two accumulators over the same stratum (pairwise update).
inline StratumStats merge_stats(const StratumStats& a, const StratumStats& b) {
  if (a.key != b.key) throw ValidationError("merge_stats: stratum keys differ");
  if (b.count == 0) return a;
  if (a.count == 0) {
    StratumStats out = b;
    out.exhausted = a.exhausted || b.exhausted;
    return out;
  }
  StratumStats out = a;
  double na = static_cast<double>(a.count), nb = static_cast<double>(b.count);
  double n = na + nb;
  double delta = b.mean - a.mean;
  out.count = a.count + b.count;
  out.mean = (na * a.mean + nb * b.mean) / n;
  out.m2 = a.m2 + b.m2 + delta * delta * (na * nb / n);
  out.exhausted = a.exhausted || b.exhausted;
  return out;
}

}  // namespace relshap
