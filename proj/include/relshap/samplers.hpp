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
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cache.hpp"
#include "coalition.hpp"
#include "errors.hpp"
#include "game.hpp"
#include "reduce.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "strata.hpp"

namespace relshap {

enum class Method { mcs, ss, ass, rss, arss };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::mcs: return "mcs";
    case Method::ss: return "ss";
    case Method::ass: return "ass";
    case Method::rss: return "rss";
    case Method::arss: return "arss";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  for (Method m : {Method::mcs, Method::ss, Method::ass, Method::rss, Method::arss})
    if (to_string(m) == name) return m;
  throw ValidationError("unknown method '" + std::string(name) + "' (mcs|ss|ass|rss|arss)");
}

inline bool is_adaptive(Method m) { return m == Method::ass || m == Method::arss; }

struct EstimatorConfig {
  Method method = Method::arss;
  std::size_t budget = 1000;  // m, marginal-contribution samples
  std::size_t cycles = 5;     // k, adaptive methods only
  std::size_t floor = 1;      // minimum samples per live stratum per cycle
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::optional<std::size_t> bins;  // quantile binning of relation vectors
  bool cache = false;
  std::size_t cache_capacity = kDefaultCacheCapacity;
  bool prune = true;
  bool dedup = false;  // enumerate a stratum outright once its allocation covers it
  EvaluatorKind evaluator = EvaluatorKind::compiled;
};

struct EstimateReport {
  double value = 0;
  Method method = Method::mcs;
  std::size_t budget = 0;
  std::size_t cycles = 1;
  std::size_t floor = 0;
  std::uint64_t seed = 0;
  TupleId target;
  EvaluatorKind evaluator = EvaluatorKind::compiled;
  std::vector<StratumStats> strata;
  std::vector<std::vector<std::size_t>> cycle_allocations;
  std::size_t samples_used = 0;
  std::size_t unsampled_strata = 0;  // live strata that never got a sample
  double wall_time = 0;
  double evaluator_time = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::vector<std::string> warnings;
};

/// True when two reports agree bit for bit on everything except timings and cache counters.
inline bool same_estimate(const EstimateReport& a, const EstimateReport& b) {
  auto bits = [](double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof u);
    return u;
  };
  if (bits(a.value) != bits(b.value) || a.samples_used != b.samples_used ||
      a.cycle_allocations != b.cycle_allocations || a.strata.size() != b.strata.size())
    return false;
  for (std::size_t i = 0; i < a.strata.size(); ++i) {
    const auto& x = a.strata[i];
    const auto& y = b.strata[i];
    if (x.key != y.key || x.count != y.count || bits(x.mean) != bits(y.mean) || bits(x.m2) != bits(y.m2) || bits(x.estimate) != bits(y.estimate) ||
        bits(x.prob) != bits(y.prob) || x.card != y.card || x.pruned != y.pruned)
      return false;
  }
  return true;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// How to draw a coalition for one stratum.
struct StratumPlan {
  enum class Kind { size, relation } kind = Kind::relation;
  std::size_t size = 0;
  std::vector<RelationVector> members;
  std::vector<double> cumulative;  // member choice ∝ card, for binned groups
  std::vector<double> scale;       // per member: (π_v / card_v) · (card_G / π_G)
};

/// Evaluates Δ for one target through the configured evaluator and optional cache.
class MarginalProbe {
 public:
  MarginalProbe(const GameContext& ctx, std::size_t target, const EstimatorConfig& cfg, CoalitionCache* cache)
      : ctx_(ctx), target_(target), kind_(cfg.evaluator), cache_(cache) {}

  /// Δ_t(S); `s` must not hold the target and is returned unchanged.
  double operator()(Coalition& s, double& eval_seconds) const {
    double without = value(s, eval_seconds);
    s.insert(target_);
    double with = value(s, eval_seconds);
    s.erase(target_);
    return with - without;
  }

 private:
  double value(const Coalition& s, double& eval_seconds) const {
    auto timed = [&](const Coalition& c) {
      auto start = Clock::now();
      double v = ctx_.value(c, kind_);
      eval_seconds += seconds_since(start);
      return v;
    };
    return cache_ ? cached_eval(*cache_, timed, s) : timed(s);
  }

  const GameContext& ctx_;
  std::size_t target_;
  EvaluatorKind kind_;
  CoalitionCache* cache_;
};

/// Calls fn on each `k`-subset of `pool` added to `base`.
inline void for_each_subset(const std::vector<std::size_t>& pool, std::size_t k, Coalition& base,
                            const std::function<void()>& fn, std::size_t from = 0) {
  if (k == 0) {
    fn();
    return;
  }
  for (std::size_t i = from; i + k <= pool.size(); ++i) {
    base.insert(pool[i]);
    for_each_subset(pool, k - 1, base, fn, i + 1);
    base.erase(pool[i]);
  }
}

/// Every coalition of a relation-vector stratum, once each.
inline void for_each_in_stratum(const RelationVector& v, const EndogenousPartition& partition, std::size_t target,
                                Coalition& s, const std::function<void()>& fn, std::size_t part = 0) {
  if (part == partition.relation_count()) {
    fn();
    return;
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = partition.part_begin(part); i < partition.part_begin(part + 1); ++i)
    if (i != target) pool.push_back(i);
  for_each_subset(pool, v.counts[part], s, [&] { for_each_in_stratum(v, partition, target, s, fn, part + 1); });
}

struct CycleTask {
  StratumStats local;
  std::size_t used = 0;
  double eval_seconds = 0;
};

inline void validate(const EstimatorConfig& cfg) {
  if (cfg.budget == 0) throw ValidationError("sample budget must be at least 1");
  if (cfg.cycles == 0) throw ValidationError("cycle count must be at least 1");
  if (cfg.bins && *cfg.bins == 0) throw ValidationError("bin count must be at least 1");
}

inline EstimateReport start_report(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg, Method method,
                                   std::size_t cycles) {
  EstimateReport r;
  r.method = method;
  r.budget = cfg.budget;
  r.cycles = cycles;
  r.floor = cfg.floor;
  r.seed = cfg.seed;
  r.target = t;
  r.evaluator = cfg.evaluator;
  (void)ctx;
  return r;
}

/// Shared engine of SS, ASS, RSS and ARSS. Cycle 0 uses the proportional rule, later
/// cycles the Neyman rule on the running σ̂. Each (stratum, cycle) pair owns its RNG
/// stream and accumulator; accumulators fold into the totals in stratum order.
inline void run_cycles(const GameContext& ctx, std::size_t target, const EstimatorConfig& cfg,
                       const std::vector<StratumPlan>& plans, EstimateReport& report, CoalitionCache* cache) {
  const std::size_t n = ctx.players();
  const auto& partition = ctx.partition();
  MarginalProbe probe(ctx, target, cfg, cache);
  double eval_total = 0;
  std::size_t max_parallel = 1;
  // Per-cycle stratum means, combined with fixed budget shares.
  std::vector<double> weighted(plans.size(), 0.0), weight(plans.size(), 0.0);

  for (std::size_t cycle = 0; cycle < report.cycles; ++cycle) {
    std::size_t cycle_budget = cfg.budget / report.cycles + (cycle < cfg.budget % report.cycles ? 1 : 0);
    AllocationResult alloc = cycle == 0 ? proportional_allocation(report.strata, cycle_budget, cfg.floor)
                                        : neyman_allocation(report.strata, cycle_budget, cfg.floor);
    if (alloc.floor_reduced)
      report.warnings.push_back("cycle " + std::to_string(cycle) + ": floor reduced to " +
                                std::to_string(alloc.floor_used) + " to fit the budget");
    report.cycle_allocations.push_back(alloc.counts);

    std::vector<std::size_t> work;
    for (std::size_t i = 0; i < plans.size(); ++i)
      if (alloc.counts[i] > 0) work.push_back(i);
    std::vector<CycleTask> tasks(work.size());
    max_parallel = std::max(max_parallel, std::min(cfg.workers, work.size()));

    parallel_for(work.size(), cfg.workers, [&](std::size_t w) {
      const std::size_t i = work[w];
      const StratumPlan& plan = plans[i];
      CycleTask& task = tasks[w];
      task.local = report.strata[i].empty_copy();
      Coalition s(n);
      const std::size_t want = alloc.counts[i];

      if (cfg.dedup && plan.members.size() <= 1 && report.strata[i].card <= want) {
        auto record = [&] {
          task.local.add(probe(s, task.eval_seconds));
          ++task.used;
        };
        if (plan.kind == StratumPlan::Kind::size) {
          std::vector<std::size_t> pool;
          for (std::size_t p = 0; p < n; ++p)
            if (p != target) pool.push_back(p);
          for_each_subset(pool, plan.size, s, record);
        } else {
          for_each_in_stratum(plan.members[0], partition, target, s, record);
        }
        task.local.exhausted = true;
        return;
      }

      Rng rng = make_stream(cfg.seed, i, cycle);
      for (std::size_t j = 0; j < want; ++j) {
        double scale = 1.0;
        if (plan.kind == StratumPlan::Kind::size) {
          sample_sized_coalition(plan.size, n, target, rng, s);
        } else if (plan.members.size() == 1) {
          sample_coalition(plan.members[0], partition, target, rng, s);
        } else {
          double u = uniform_unit(rng) * plan.cumulative.back();
          auto it = std::upper_bound(plan.cumulative.begin(), plan.cumulative.end(), u);
          std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(it - plan.cumulative.begin()),
                                                plan.members.size() - 1);
          sample_coalition(plan.members[m], partition, target, rng, s);
          scale = plan.scale[m];
        }
        task.local.add(scale * probe(s, task.eval_seconds));
      }
      task.used = want;
    });

    const double share = static_cast<double>(cycle_budget) / static_cast<double>(cfg.budget);
    for (std::size_t w = 0; w < work.size(); ++w) {
      const std::size_t i = work[w];
      auto& total = report.strata[i];
      if (tasks[w].local.exhausted) {
        weighted[i] = tasks[w].local.mean;
        weight[i] = 1.0;
      } else if (tasks[w].local.count > 0) {
        weighted[i] += share * tasks[w].local.mean;
        weight[i] += share;
      }
      total = merge_stats(total, tasks[w].local);
      report.samples_used += tasks[w].used;
      eval_total += tasks[w].eval_seconds;
    }
  }

  double value = 0;
  for (std::size_t i = 0; i < report.strata.size(); ++i) {
    auto& s = report.strata[i];
    if (s.pruned) continue;
    if (s.count == 0) {
      ++report.unsampled_strata;
      continue;
    }
    s.estimate = weighted[i] / weight[i];
    value += s.prob * s.estimate;
  }
  if (report.unsampled_strata > 0)
    report.warnings.push_back(std::to_string(report.unsampled_strata) +
                              " live strata received no samples; they contribute 0");
  report.value = value;
  report.evaluator_time = eval_total / static_cast<double>(max_parallel);
}

inline EstimateReport finish(EstimateReport report, Clock::time_point start, const CoalitionCache* cache) {
  report.wall_time = seconds_since(start);
  report.evaluator_time = std::min(report.evaluator_time, report.wall_time);
  if (cache) {
    report.cache_hits = cache->hits();
    report.cache_misses = cache->misses();
  }
  return report;
}

inline std::optional<EstimateReport> trivial_target(const GameContext& ctx, TupleId t, EstimateReport& report) {
  if (is_endogenous(ctx.partition(), t)) return std::nullopt;
  report.value = 0;
  report.warnings.push_back("target " + ctx.instance().label(t) + " is not endogenous; its value is 0");
  return report;
}

/// 2^(n-1) · w(s, n) for every size s.
inline std::vector<double> mcs_factors(std::size_t n) {
  std::vector<double> f(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (n <= 1000) {
      f[s] = std::ldexp(shapley_weight(s, n), static_cast<int>(n - 1));
    } else {
      double nn = static_cast<double>(n), ss = static_cast<double>(s);
      f[s] = std::exp((nn - 1) * std::log(2.0) + std::lgamma(ss + 1) + std::lgamma(nn - ss) - std::lgamma(nn + 1));
    }
  }
  return f;
}

inline constexpr std::size_t kMcsChunk = 1024;

}  // namespace detail

/// Plain Monte Carlo over coalitions: each other player joins S with probability 1/2 and
/// the estimate is (2^(n-1)/m) Σ_j w(|S_j|, n) Δ_t(S_j).
inline EstimateReport run_mcs(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  auto start = detail::Clock::now();
  detail::validate(cfg);
  EstimateReport report = detail::start_report(ctx, t, cfg, Method::mcs, 1);
  if (auto r = detail::trivial_target(ctx, t, report)) return detail::finish(*r, start, nullptr);

  const std::size_t n = ctx.players();
  const std::size_t target = ctx.player_index(t);
  std::optional<CoalitionCache> cache;
  if (cfg.cache) cache.emplace(cfg.cache_capacity);
  detail::MarginalProbe probe(ctx, target, cfg, cache ? &*cache : nullptr);
  const auto factor = detail::mcs_factors(n);

  StratumStats all;
  all.prob = 1.0;
  all.card = BigCount(1) << (n - 1);
  const std::size_t chunks = (cfg.budget + detail::kMcsChunk - 1) / detail::kMcsChunk;
  std::vector<detail::CycleTask> tasks(chunks);
  detail::parallel_for(chunks, cfg.workers, [&](std::size_t c) {
    auto& task = tasks[c];
    task.local = all.empty_copy();
    Rng rng = make_stream(cfg.seed, c, 0);
    std::size_t want = std::min(detail::kMcsChunk, cfg.budget - c * detail::kMcsChunk);
    Coalition s(n);
    for (std::size_t j = 0; j < want; ++j) {
      s.clear();
      std::uint64_t bits = 0;
      std::size_t left = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (p == target) continue;
        if (left == 0) {
          bits = rng();
          left = 64;
        }
        if (bits & 1) s.insert(p);
        bits >>= 1;
        --left;
      }
      task.local.add(factor[s.count()] * probe(s, task.eval_seconds));
    }
    task.used = want;
  });
  double eval_total = 0;
  for (auto& task : tasks) {
    all = merge_stats(all, task.local);
    report.samples_used += task.used;
    eval_total += task.eval_seconds;
  }
  report.value = all.mean;
  report.strata.push_back(all);
  report.cycle_allocations.push_back({cfg.budget});
  report.evaluator_time = eval_total / static_cast<double>(std::max<std::size_t>(1, std::min(cfg.workers, chunks)));
  return detail::finish(std::move(report), start, cache ? &*cache : nullptr);
}

namespace detail {

inline EstimateReport run_size_stratified(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg,
                                          Method method, std::size_t cycles) {
  auto start = Clock::now();
  validate(cfg);
  EstimateReport report = start_report(ctx, t, cfg, method, cycles);
  if (auto r = trivial_target(ctx, t, report)) return finish(*r, start, nullptr);
  const std::size_t n = ctx.players();
  std::vector<StratumPlan> plans(n);
  report.strata.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    plans[k].kind = StratumPlan::Kind::size;
    plans[k].size = k;
    auto& s = report.strata[k];
    s.key = {k};
    s.card = binomial(n - 1, k);
    s.prob = 1.0 / static_cast<double>(n);
  }
  std::optional<CoalitionCache> cache;
  if (cfg.cache) cache.emplace(cfg.cache_capacity);
  run_cycles(ctx, ctx.player_index(t), cfg, plans, report, cache ? &*cache : nullptr);
  return finish(std::move(report), start, cache ? &*cache : nullptr);
}

inline EstimateReport run_relation_stratified(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg,
                                              Method method, std::size_t cycles) {
  auto start = Clock::now();
  validate(cfg);
  EstimateReport report = start_report(ctx, t, cfg, method, cycles);
  if (auto r = trivial_target(ctx, t, report)) return finish(*r, start, nullptr);
  const auto& partition = ctx.partition();
  const std::size_t n = ctx.players();
  const auto sizes = reduced_sizes(partition, t);
  const auto vectors = enumerate_strata(sizes);
  std::vector<bool> pruned = cfg.prune ? prune_strata(vectors, ctx.query(), partition, t)
                                       : std::vector<bool>(vectors.size(), false);

  std::vector<StratumPlan> plans;
  auto add_single = [&](std::size_t idx) {
    StratumPlan plan;
    plan.members = {vectors[idx]};
    plans.push_back(std::move(plan));
    StratumStats s;
    s.key = vectors[idx].counts;
    s.card = stratum_card(vectors[idx], sizes);
    s.prob = stratum_prob(vectors[idx], sizes, n);
    s.pruned = pruned[idx];
    report.strata.push_back(std::move(s));
  };

  if (!cfg.bins) {
    for (std::size_t i = 0; i < vectors.size(); ++i) add_single(i);
  } else {
    std::vector<RelationVector> live;
    std::vector<std::size_t> live_index;
    for (std::size_t i = 0; i < vectors.size(); ++i)
      if (!pruned[i]) {
        live.push_back(vectors[i]);
        live_index.push_back(i);
      }
    for (const auto& group : bin_strata(live, sizes, *cfg.bins)) {
      if (group.members.size() == 1) {
        add_single(live_index[group.members[0]]);
        continue;
      }
      StratumPlan plan;
      StratumStats s;
      s.key = group.bins;
      double running = 0;
      std::vector<double> member_prob;
      for (auto m : group.members) {
        const auto& v = live[m];
        BigCount card = stratum_card(v, sizes);
        double prob = stratum_prob(v, sizes, n);
        plan.members.push_back(v);
        running += static_cast<double>(card);
        plan.cumulative.push_back(running);
        member_prob.push_back(prob);
        s.card += card;
        s.prob += prob;
      }
      for (std::size_t j = 0; j < plan.members.size(); ++j) {
        const auto& v = plan.members[j];
        // (π_v / card_v) · card_G / π_G, with π_v / card_v = 1 / (n · C(n−1, |v|)).
        plan.scale.push_back(ratio_to_double(s.card, binomial(n - 1, v.total()) * n) / s.prob);
      }
      plans.push_back(std::move(plan));
      report.strata.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < vectors.size(); ++i)
      if (pruned[i]) add_single(i);
  }

  std::optional<CoalitionCache> cache;
  if (cfg.cache) cache.emplace(cfg.cache_capacity);
  run_cycles(ctx, ctx.player_index(t), cfg, plans, report, cache ? &*cache : nullptr);
  return finish(std::move(report), start, cache ? &*cache : nullptr);
}

}  // namespace detail

/// Size strata 0..n-1, each weighted 1/n, one proportional pass.
inline EstimateReport run_ss(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  return detail::run_size_stratified(ctx, t, cfg, Method::ss, 1);
}

/// Size strata with k cycles: proportional cold start, then Neyman reallocation.
inline EstimateReport run_ass(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  return detail::run_size_stratified(ctx, t, cfg, Method::ass, cfg.cycles);
}

/// Relation-vector strata, proportional allocation, combined with the exact π weights.
inline EstimateReport run_rss(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  return detail::run_relation_stratified(ctx, t, cfg, Method::rss, 1);
}

/// Relation-vector strata with k cycles of variance-driven reallocation.
inline EstimateReport run_arss(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  return detail::run_relation_stratified(ctx, t, cfg, Method::arss, cfg.cycles);
}

inline EstimateReport estimate(const GameContext& ctx, TupleId t, const EstimatorConfig& cfg) {
  switch (cfg.method) {
    case Method::mcs: return run_mcs(ctx, t, cfg);
    case Method::ss: return run_ss(ctx, t, cfg);
    case Method::ass: return run_ass(ctx, t, cfg);
    case Method::rss: return run_rss(ctx, t, cfg);
    case Method::arss: return run_arss(ctx, t, cfg);
  }
  throw ValidationError("unknown method");
}

}  // namespace relshap
