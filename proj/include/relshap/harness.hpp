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
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "game.hpp"
#include "query.hpp"
#include "relcore.hpp"
#include "report.hpp"
#include "samplers.hpp"

namespace relshap {

/// An instance plus the query it was generated for.
struct Workload {
  DatabaseInstance instance;
  QuerySpec query;
};

/// The revenue query over (customer, orders, lineitem) with a constant order key.
inline QuerySpec revenue_query(double orderkey) {
  QuerySpec q;
  q.relations = {{"customer", "c"}, {"orders", "o"}, {"lineitem", "l"}};
  q.equijoins = {{{"c", "custkey"}, {"o", "custkey"}}, {{"l", "orderkey"}, {"o", "orderkey"}}};
  q.predicates = {parse_predicate("c.mktsegment = 'AUTO'"), parse_predicate("l.shipdate > o.orderdate")};
  Predicate key;
  key.lhs = ColumnRef{"o", "orderkey"};
  key.op = CompareOp::eq;
  key.rhs = orderkey;
  q.predicates.push_back(key);
  q.aggregate.kind = AggregateKind::sum;
  q.aggregate.expr = parse_arith("l.extendedprice * (1 - l.discount)");
  return q;
}

namespace detail {

inline Relation lineitem_relation() {
  return Relation("lineitem", {{"orderkey", ColumnType::integer},
                               {"extendedprice", ColumnType::decimal},
                               {"discount", ColumnType::decimal},
                               {"shipdate", ColumnType::date}});
}

inline Relation customer_relation() {
  return Relation("customer", {{"custkey", ColumnType::integer},
                               {"name", ColumnType::text},
                               {"acctbal", ColumnType::decimal},
                               {"mktsegment", ColumnType::text}});
}

inline Relation orders_relation() {
  return Relation("orders", {{"orderkey", ColumnType::integer},
                             {"custkey", ColumnType::integer},
                             {"orderdate", ColumnType::date},
                             {"shippriority", ColumnType::integer}});
}

inline double day(const char* text) { return static_cast<double>(parse_date(text)); }

}  // namespace detail

/// The example1 preset: 8 lineitems, 2 customers, 3 orders; the revenue
/// query on order 23417 totals 2319.5.
inline Workload example1() {
  using detail::day;
  Relation lineitem = detail::lineitem_relation();
  const std::vector<std::vector<Cell>> items = {
      {23417.0, 500.0, 0.10, day("1998-04-21")}, {23417.0, 600.0, 0.01, day("1998-04-16")},
      {23417.0, 700.0, 0.06, day("1998-04-06")}, {23417.0, 650.0, 0.05, day("1998-03-25")},
      {23110.0, 820.0, 0.04, day("1998-02-14")}, {23110.0, 560.0, 0.03, day("1998-02-17")},
      {22789.0, 400.0, 0.07, day("1998-01-11")}, {22789.0, 720.0, 0.06, day("1998-01-15")}};
  for (const auto& row : items) lineitem.append(row);

  Relation customer = detail::customer_relation();
  customer.append({1456.0, std::string("Cust1456"), 6800.0, std::string("AUTO")});
  customer.append({3125.0, std::string("Cust3125"), 4300.0, std::string("MACHINERY")});

  Relation orders = detail::orders_relation();
  orders.append({23417.0, 1456.0, day("1997-12-21"), 0.0});
  orders.append({23110.0, 3125.0, day("1998-01-05"), 1.0});
  orders.append({22789.0, 3125.0, day("1998-01-07"), 0.0});

  return {DatabaseInstance({std::move(lineitem), std::move(customer), std::move(orders)}), revenue_query(23417)};
}

struct StarScale {
  std::size_t fact = 8;  // lineitem rows
  std::size_t dim1 = 3;  // orders
  std::size_t dim2 = 2;  // customers
};

/// Deterministic star instance in the shape of example1. Lineitem i belongs
/// to order i mod dim1; the query selects order 0, whose customer is in segment AUTO.
/// Prices are lognormal with shape `skew` (0 gives a flat 400..800 range).
inline Workload gen_instance(std::uint64_t seed, StarScale scale, double skew) {
  if (scale.dim1 == 0 || scale.dim2 == 0) throw ValidationError("star generator needs at least one order and customer");
  if (skew < 0) throw ValidationError("skew must be non-negative");
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  auto cents = [](double x) { return std::round(x * 100.0) / 100.0; };
  static const char* segments[] = {"AUTO", "MACHINERY", "BUILDING", "FURNITURE", "HOUSEHOLD"};

  Relation customer = detail::customer_relation();
  std::vector<double> custkeys;
  for (std::size_t c = 0; c < scale.dim2; ++c) {
    double key = static_cast<double>(1000 + 137 * c);
    custkeys.push_back(key);
    std::string segment = c == 0 ? "AUTO" : segments[uniform_int(0, 4)];
    customer.append({key, "Cust" + std::to_string(1000 + 137 * c), cents(static_cast<double>(uniform_int(100000, 900000)) / 100.0),
                     segment});
  }

  Relation orders = detail::orders_relation();
  std::vector<double> orderkeys, orderdates;
  const double first_day = detail::day("1997-01-01");
  for (std::size_t o = 0; o < scale.dim1; ++o) {
    double key = static_cast<double>(20000 + 311 * o);
    double cust = o == 0 ? custkeys[0] : custkeys[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(scale.dim2) - 1))];
    double date = first_day + static_cast<double>(uniform_int(0, 364));
    orderkeys.push_back(key);
    orderdates.push_back(date);
    orders.append({key, cust, date, static_cast<double>(uniform_int(0, 1))});
  }

  Relation lineitem = detail::lineitem_relation();
  for (std::size_t i = 0; i < scale.fact; ++i) {
    std::size_t o = i % scale.dim1;
    double base = static_cast<double>(uniform_int(400, 800));
    double price = cents(base * std::exp(skew * normal(rng)));
    double discount = static_cast<double>(uniform_int(0, 10)) / 100.0;
    double ship = orderdates[o] + static_cast<double>(uniform_int(-10, 90));
    lineitem.append({orderkeys[o], std::max(price, 0.01), discount, ship});
  }

  return {DatabaseInstance({std::move(lineitem), std::move(customer), std::move(orders)}), revenue_query(orderkeys[0])};
}

/// schema.json, one CSV per relation and query.json.
inline void save_workload(const Workload& w, const std::filesystem::path& dir) {
  save_instance(w.instance, dir);
  std::ofstream(dir / "query.json") << query_json(w.query).dump(2) << '\n';
}

/// Mean of |estimate − exact| / |exact|.
inline double mre(const std::vector<double>& estimates, double exact) {
  if (exact == 0) throw DomainError("relative error is undefined for an exact value of 0; use absolute error");
  if (estimates.empty()) throw ValidationError("mre needs at least one estimate");
  double total = 0;
  for (double e : estimates) total += std::abs(e - exact) / std::abs(exact);
  return total / static_cast<double>(estimates.size());
}

inline double mean_absolute_error(const std::vector<double>& estimates, double exact) {
  double total = 0;
  for (double e : estimates) total += std::abs(e - exact);
  return estimates.empty() ? 0.0 : total / static_cast<double>(estimates.size());
}

struct BenchSpec {
  std::filesystem::path schema;  // empty with preset set
  std::filesystem::path query;
  std::string preset;            // "example1" instead of files
  std::vector<std::string> targets;
  std::vector<Method> methods = {Method::mcs, Method::ss, Method::ass, Method::rss, Method::arss};
  std::vector<std::size_t> budgets = {1000, 10000};
  std::size_t repetitions = 20;
  std::uint64_t seed = 0;
  bool exact = true;  // false: estimates only, no MRE
  bool parallel_cells = false;
  EstimatorConfig base;  // cycles, floor, workers, cache, bins, prune, evaluator
};

struct BenchCell {
  Method method = Method::mcs;
  std::size_t budget = 0;
  std::vector<double> estimates;
  std::vector<double> seconds;
  std::vector<double> evaluator_seconds;
  std::optional<double> mre;
  std::optional<double> mean_abs_error;
  double mean_wall = 0;
  double mean_evaluator = 0;
};

struct TargetResult {
  TupleId target;
  std::string label;
  std::optional<double> exact;
  double oracle_seconds = 0;
  std::vector<BenchCell> cells;
};

struct BenchResult {
  std::size_t players = 0;
  double empty_value = 0;
  double full_value = 0;
  std::vector<TargetResult> targets;
};

inline void validate(const BenchSpec& spec) {
  if (spec.repetitions == 0) throw ValidationError("repetitions must be at least 1");
  if (spec.budgets.empty()) throw ValidationError("no budgets given");
  for (std::size_t i = 1; i < spec.budgets.size(); ++i)
    if (spec.budgets[i] <= spec.budgets[i - 1]) throw ValidationError("budgets must be strictly increasing");
  if (spec.methods.empty()) throw ValidationError("no methods given");
  if (spec.targets.empty()) throw ValidationError("no target tuples given");
}

/// R seeded repetitions (seed + rep) of every (method, budget) cell for each target.
inline BenchResult run_bench(const GameContext& ctx, const BenchSpec& spec) {
  validate(spec);
  BenchResult result;
  result.players = ctx.players();
  result.empty_value = ctx.empty_value();
  result.full_value = ctx.full_value();
  for (const auto& label : spec.targets) {
    TargetResult tr;
    tr.target = ctx.instance().parse_label(label);
    tr.label = ctx.instance().label(tr.target);
    if (spec.exact) {
      auto start = std::chrono::steady_clock::now();
      tr.exact = exact_shapley(ctx, tr.target, spec.base.workers);
      tr.oracle_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    for (Method m : spec.methods)
      for (std::size_t b : spec.budgets) {
        BenchCell cell;
        cell.method = m;
        cell.budget = b;
        tr.cells.push_back(cell);
      }
    detail::parallel_for(tr.cells.size(), spec.parallel_cells ? spec.base.workers : 1, [&](std::size_t c) {
      BenchCell& cell = tr.cells[c];
      EstimatorConfig cfg = spec.base;
      cfg.method = cell.method;
      cfg.budget = cell.budget;
      if (spec.parallel_cells) cfg.workers = 1;
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
        cfg.seed = spec.seed + rep;
        EstimateReport r = estimate(ctx, tr.target, cfg);
        cell.estimates.push_back(r.value);
        cell.seconds.push_back(r.wall_time);
        cell.evaluator_seconds.push_back(r.evaluator_time);
      }
      double reps = static_cast<double>(spec.repetitions);
      for (std::size_t i = 0; i < cell.seconds.size(); ++i) {
        cell.mean_wall += cell.seconds[i] / reps;
        cell.mean_evaluator += cell.evaluator_seconds[i] / reps;
      }
      if (tr.exact) {
        cell.mean_abs_error = mean_absolute_error(cell.estimates, *tr.exact);
        if (*tr.exact != 0) cell.mre = mre(cell.estimates, *tr.exact);
      }
    });
    result.targets.push_back(std::move(tr));
  }
  return result;
}

/// Loads the instance (files or preset) and runs the bench on a fresh context.
inline BenchResult run_bench(const BenchSpec& spec, GameOptions options = {}) {
  Workload w;
  if (spec.preset == "example1") {
    w = example1();
  } else if (!spec.preset.empty()) {
    throw ValidationError("unknown preset '" + spec.preset + "'");
  } else {
    w.instance = load_instance(spec.schema);
    w.query = parse_query(read_json_file(spec.query));
  }
  options.evaluator = spec.base.evaluator;
  GameContext ctx(w.instance, w.query, options);
  if (spec.exact && ctx.players() > options.exact_cap)
    throw CapExceeded("n = " + std::to_string(ctx.players()) + " exceeds the exact-oracle cap of " +
                      std::to_string(options.exact_cap) + "; pass --no-exact for estimate-only mode");
  return run_bench(ctx, spec);
}

inline nlohmann::json bench_json(const BenchResult& r) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : r.targets) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : t.cells) {
      nlohmann::json cell = {{"method", to_string(c.method)},
                             {"budget", c.budget},
                             {"estimates", c.estimates},
                             {"mean_wall_time", c.mean_wall},
                             {"mean_evaluator_time", c.mean_evaluator}};
      if (c.mre) cell["mre"] = *c.mre;
      if (c.mean_abs_error) cell["mean_abs_error"] = *c.mean_abs_error;
      cells.push_back(std::move(cell));
    }
    nlohmann::json entry = {{"target", t.target.value}, {"label", t.label}, {"cells", cells}};
    if (t.exact) {
      entry["exact"] = *t.exact;
      entry["oracle_time"] = t.oracle_seconds;
    }
    targets.push_back(std::move(entry));
  }
  return {{"players", r.players}, {"empty_value", r.empty_value}, {"full_value", r.full_value}, {"targets", targets}};
}

/// Flat table: target,method,budget,rep,estimate,seconds.
inline std::string bench_csv(const BenchResult& r) {
  std::ostringstream out;
  out << "target,method,budget,rep,estimate,seconds\n";
  for (const auto& t : r.targets)
    for (const auto& c : t.cells)
      for (std::size_t rep = 0; rep < c.estimates.size(); ++rep)
        out << t.label << ',' << to_string(c.method) << ',' << c.budget << ',' << rep << ','
            << format_number(c.estimates[rep]) << ',' << format_number(c.seconds[rep]) << '\n';
  return out.str();
}

}  // namespace relshap
