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
#include <random>

namespace relshap {

using Rng = std::mt19937_64;

/// Independent generator for one work unit, derived from (seed, unit, cycle) alone,
/// so scheduling order cannot change what a unit draws.
inline Rng make_stream(std::uint64_t seed, std::uint64_t unit, std::uint64_t cycle) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(unit), static_cast<std::uint32_t>(unit >> 32),
                    static_cast<std::uint32_t>(cycle), static_cast<std::uint32_t>(cycle >> 32)};
  return Rng(seq);
}

/// Uniform integer in [0, bound].
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  return std::uniform_int_distribution<std::uint64_t>(0, bound)(rng);
}

inline double uniform_unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace relshap
