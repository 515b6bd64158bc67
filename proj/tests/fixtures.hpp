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

// Hand-built workloads shared by the unit and acceptance tests.

#pragma once

#include <tuple>
#include <vector>

#include "relshap/harness.hpp"

namespace fixtures {

using namespace relshap;

// example1 with the lineitems of order 23417 replaced by (price, discount, shipdate) rows.
Workload example_with_items(const std::vector<std::tuple<double, double, const char*>>& items) {
  auto base = example1();
  std::vector<Relation> rels;
  for (const auto& r : base.instance.relations()) {
    Relation copy(r.name(), r.columns(), r.endogenous());
    if (r.name() == "lineitem") {
      for (auto [price, discount, ship] : items)
        copy.append({23417.0, price, discount, static_cast<double>(parse_date(ship))});
    }
    for (std::size_t row = 0; row < r.size(); ++row) {
      if (r.name() == "lineitem" && r.number(0, row) == 23417.0) continue;
      std::vector<Cell> cells;
      for (std::size_t c = 0; c < r.columns().size(); ++c) cells.push_back(r.cell(c, row));
      copy.append(cells);
    }
    rels.push_back(std::move(copy));
  }
  return {DatabaseInstance(std::move(rels)), base.query};
}

/// example1 with four equal lineitem terms (450 each), so Δ is constant inside every relation vector.
inline Workload constant_terms() {
  return example_with_items(
      {{500, 0.1, "1998-04-21"}, {500, 0.1, "1998-04-16"}, {500, 0.1, "1998-04-06"}, {500, 0.1, "1998-03-25"}});
}

}  // namespace fixtures
