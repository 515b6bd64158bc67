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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "relshap/relshap.hpp"

using namespace relshap;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("relshap_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Generator, SameSeedSameFiles) {
  auto a = scratch("gen_a"), b = scratch("gen_b");
  save_workload(gen_instance(77, {50, 5, 4}, 2.0), a);
  save_workload(gen_instance(77, {50, 5, 4}, 2.0), b);
  for (auto f : {"schema.json", "lineitem.csv", "orders.csv", "customer.csv", "query.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  save_workload(gen_instance(78, {50, 5, 4}, 2.0), b);
  EXPECT_NE(slurp(a / "lineitem.csv"), slurp(b / "lineitem.csv"));
}

TEST(Generator, FilesReloadToTheSameGame) {
  auto dir = scratch("gen_reload");
  auto w = gen_instance(5, {30, 3, 2}, 1.0);
  save_workload(w, dir);
  auto db = load_instance(dir / "schema.json");
  auto q = parse_query(read_json_file(dir / "query.json"));
  GameContext a(w.instance, w.query), b(db, q);
  EXPECT_EQ(a.players(), b.players());
  EXPECT_EQ(a.full_value(), b.full_value());
}

TEST(Generator, RevenueQueryShape) {
  auto w = gen_instance(1, {20, 4, 3}, 0.0);
  EXPECT_EQ(w.query.relations.size(), 3u);
  EXPECT_EQ(w.query.equijoins.size(), 2u);
  EXPECT_EQ(w.query.predicates.size(), 3u);
  EXPECT_EQ(w.query.aggregate.kind, AggregateKind::sum);
  GameContext ctx(w.instance, w.query);
  EXPECT_GT(ctx.players(), 2u);
  // the selected order and its AUTO customer are always in the lineage
  EXPECT_TRUE(ctx.partition().contains(w.instance.parse_label("orders:0")));
  EXPECT_TRUE(ctx.partition().contains(w.instance.parse_label("customer:0")));
}

TEST(Generator, EmptyFactTableGivesZeroAttributions) {
  auto w = gen_instance(2, {0, 3, 2}, 1.0);
  GameContext ctx(w.instance, w.query);
  EXPECT_EQ(ctx.players(), 0u);
  EXPECT_EQ(ctx.full_value(), 0.0);
  for (std::uint32_t id = 0; id < w.instance.total_tuples(); ++id) {
    EXPECT_EQ(exact_shapley(ctx, TupleId{id}), 0.0);
    EstimatorConfig cfg;
    EXPECT_EQ(estimate(ctx, TupleId{id}, cfg).value, 0.0);
  }
}

TEST(Generator, RejectsBadScale) {
  EXPECT_THROW(gen_instance(0, {5, 0, 2}, 1.0), ValidationError);
  EXPECT_THROW(gen_instance(0, {5, 2, 2}, -1.0), ValidationError);
}

TEST(Preset, ExampleFilesMatchPreset) {
  auto dir = scratch("preset");
  save_workload(example1(), dir);
  const fs::path shipped = fs::path(RELSHAP_DATA_DIR) / "example1";
  for (auto f : {"schema.json", "lineitem.csv", "orders.csv", "customer.csv", "query.json"})
    EXPECT_EQ(slurp(dir / f), slurp(shipped / f)) << f;
}

TEST(Mre, Definition) {
  EXPECT_EQ(mre({5.0}, 5.0), 0.0);
  EXPECT_NEAR(mre({1.1 * 7, 0.9 * 7}, 7.0), 0.1, 1e-12);
  EXPECT_NEAR(mre({-2.0}, -1.0), 1.0, 1e-12);
  EXPECT_THROW(mre({1.0}, 0.0), DomainError);
  EXPECT_THROW(mre({}, 1.0), ValidationError);
}

TEST(Bench, ExamplePresetConvergesWithBudget) {
  BenchSpec spec;
  spec.preset = "example1";
  spec.targets = {"orders:0"};
  spec.budgets = {100, 1000};
  spec.repetitions = 20;
  auto r = run_bench(spec);
  ASSERT_EQ(r.targets.size(), 1u);
  const auto& t = r.targets[0];
  ASSERT_TRUE(t.exact);
  EXPECT_NEAR(*t.exact, 2319.5 / 3, 1e-9);
  ASSERT_EQ(t.cells.size(), 10u);
  for (std::size_t i = 0; i < t.cells.size(); i += 2) {
    const auto& small = t.cells[i];
    const auto& large = t.cells[i + 1];
    ASSERT_EQ(small.method, large.method);
    ASSERT_TRUE(small.mre && large.mre);
    EXPECT_LE(*large.mre, *small.mre) << to_string(small.method);
    EXPECT_GE(*small.mre, 0.0);
    for (std::size_t rep = 0; rep < small.seconds.size(); ++rep)
      EXPECT_LE(small.evaluator_seconds[rep], small.seconds[rep]);
  }
}

TEST(Bench, SingleRepetitionIsReproducible) {
  BenchSpec spec;
  spec.preset = "example1";
  spec.targets = {"orders:0", "lineitem:2"};
  spec.budgets = {50, 500};
  spec.repetitions = 1;
  spec.seed = 9;
  auto a = run_bench(spec), b = run_bench(spec);
  ASSERT_EQ(a.targets.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < a.targets[t].cells.size(); ++c)
      EXPECT_EQ(a.targets[t].cells[c].estimates, b.targets[t].cells[c].estimates);
  spec.parallel_cells = true;
  spec.base.workers = 3;
  auto p = run_bench(spec);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < a.targets[t].cells.size(); ++c)
      EXPECT_EQ(a.targets[t].cells[c].estimates, p.targets[t].cells[c].estimates);
}

TEST(Bench, SharesOneContextWithTheOracle) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  BenchSpec spec;
  spec.targets = {"orders:0"};
  spec.budgets = {100};
  spec.repetitions = 2;
  auto r = run_bench(ctx, spec);
  EXPECT_EQ(r.empty_value, ctx.empty_value());
  EXPECT_EQ(r.full_value, ctx.full_value());
  EXPECT_EQ(*r.targets[0].exact, exact_shapley(ctx, w.instance.parse_label("orders:0")));
}

TEST(Bench, ValidationAndCaps) {
  BenchSpec spec;
  spec.preset = "example1";
  spec.targets = {"orders:0"};
  spec.budgets = {1000, 100};
  EXPECT_THROW(run_bench(spec), ValidationError);
  spec.budgets = {100};
  spec.repetitions = 0;
  EXPECT_THROW(run_bench(spec), ValidationError);
  spec.repetitions = 2;
  GameOptions small;
  small.exact_cap = 4;
  EXPECT_THROW(run_bench(spec, small), CapExceeded);
  spec.exact = false;
  auto r = run_bench(spec, small);
  EXPECT_FALSE(r.targets[0].exact);
  EXPECT_FALSE(r.targets[0].cells[0].mre);
  EXPECT_EQ(r.targets[0].cells[0].estimates.size(), 2u);
  spec.preset = "tpch";
  EXPECT_THROW(run_bench(spec), ValidationError);
}

TEST(Bench, OutputsListEveryRepetition) {
  BenchSpec spec;
  spec.preset = "example1";
  spec.targets = {"orders:0"};
  spec.methods = {Method::ss, Method::arss};
  spec.budgets = {100, 200};
  spec.repetitions = 3;
  auto r = run_bench(spec);
  auto csv = bench_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "target,method,budget,rep,estimate,seconds");
  auto j = bench_json(r);
  EXPECT_EQ(j["targets"][0]["cells"].size(), 4u);
  EXPECT_TRUE(j["targets"][0].contains("exact"));
}
