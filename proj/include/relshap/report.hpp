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

#include <string>

#include <json.hpp>

#include "samplers.hpp"

namespace relshap {

inline nlohmann::json stratum_json(const StratumStats& s) {
  return {{"key", s.key},
          {"count", s.count},
          {"mean", s.mean},
          {"estimate", s.estimate},
          {"variance", s.variance()},
          {"prob", s.prob},
          {"card", s.card.str()},
          {"pruned", s.pruned},
          {"exhausted", s.exhausted}};
}

inline nlohmann::json report_json(const EstimateReport& r, const DatabaseInstance* db = nullptr) {
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : r.strata) strata.push_back(stratum_json(s));
  nlohmann::json out = {{"value", r.value},
                        {"method", to_string(r.method)},
                        {"budget", r.budget},
                        {"cycles", r.cycles},
                        {"floor", r.floor},
                        {"seed", r.seed},
                        {"target", r.target.value},
                        {"evaluator", to_string(r.evaluator)},
                        {"samples_used", r.samples_used},
                        {"unsampled_strata", r.unsampled_strata},
                        {"wall_time", r.wall_time},
                        {"evaluator_time", r.evaluator_time},
                        {"cache_hits", r.cache_hits},
                        {"cache_misses", r.cache_misses},
                        {"cycle_allocations", r.cycle_allocations},
                        {"warnings", r.warnings},
                        {"strata", strata}};
  if (db) out["target_label"] = db->label(r.target);
  return out;
}

}  // namespace relshap
