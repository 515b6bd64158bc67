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

#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "relshap/relshap.hpp"

using namespace relshap;

namespace {

const std::filesystem::path kExample = std::filesystem::path(RELSHAP_DATA_DIR) / "example1";

Mask endogenous_mask(const DatabaseInstance& db, std::vector<std::string> labels) {
  Mask mask(db);
  for (std::size_t r = 0; r < db.relations().size(); ++r) {
    std::vector<TupleId> ids;
    for (const auto& l : labels) {
      TupleId t = db.parse_label(l);
      if (db.locate(t)->first == r) ids.push_back(t);
    }
    mask.restrict_to(db, r, ids);
  }
  return mask;
}

}  // namespace

TEST(LoadInstance, ExampleFilesGiveThirteenTuples) {
  auto db = load_instance(kExample / "schema.json");
  EXPECT_EQ(db.total_tuples(), 13u);
  EXPECT_EQ(db.relation(*db.find("lineitem")).size(), 8u);
  EXPECT_EQ(db.relation(*db.find("customer")).size(), 2u);
  EXPECT_EQ(db.relation(*db.find("orders")).size(), 3u);
}

TEST(LoadInstance, IdsAreRelationMajor) {
  auto db = load_instance(kExample / "schema.json");
  std::uint32_t expect = 0;
  for (std::size_t r = 0; r < db.relations().size(); ++r)
    for (std::size_t row = 0; row < db.relation(r).size(); ++row) {
      TupleId t = db.id(r, row);
      EXPECT_EQ(t.value, expect++);
      auto loc = db.locate(t);
      ASSERT_TRUE(loc);
      EXPECT_EQ(loc->first, r);
      EXPECT_EQ(loc->second, row);
    }
}

TEST(LoadInstance, DatesBecomeEpochDays) {
  auto db = load_instance(kExample / "schema.json");
  const auto& orders = db.relation(*db.find("orders"));
  EXPECT_EQ(orders.number(*orders.column_index("orderdate"), 0), static_cast<double>(parse_date("1997-12-21")));
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(parse_date("1970-01-02"), 1);
  EXPECT_EQ(format_date(parse_date("1998-04-21")), "1998-04-21");
  EXPECT_THROW(parse_date("1998-02-30"), ValidationError);
}

TEST(LoadInstance, EmptyRelationIsValid) {
  nlohmann::json schema = {{"relations", {{{"name", "r"}, {"columns", {{{"name", "x"}, {"type", "integer"}}}}}}}};
  std::istringstream table("x\n");
  auto db = load_instance(schema, {&table});
  EXPECT_EQ(db.total_tuples(), 0u);
  EXPECT_EQ(db.relation(0).size(), 0u);
}

TEST(LoadInstance, TypeMismatchIsReported) {
  nlohmann::json schema = {{"relations", {{{"name", "r"}, {"columns", {{{"name", "x"}, {"type", "decimal"}}}}}}}};
  std::istringstream table("x\nabc\n");
  try {
    load_instance(schema, {&table});
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("type mismatch"), std::string::npos);
  }
}

TEST(LoadInstance, HeaderMustMatchSchema) {
  nlohmann::json schema = {{"relations", {{{"name", "r"}, {"columns", {{{"name", "x"}, {"type", "integer"}}}}}}}};
  std::istringstream table("y\n1\n");
  EXPECT_THROW(load_instance(schema, {&table}), ValidationError);
}

TEST(LoadInstance, DuplicateRelationNamesRejected) {
  nlohmann::json rel = {{"name", "r"}, {"columns", {{{"name", "x"}, {"type", "integer"}}}}};
  nlohmann::json schema = {{"relations", {rel, rel}}};
  std::istringstream a("x\n1\n"), b("x\n2\n");
  EXPECT_THROW(load_instance(schema, std::vector<std::istream*>{&a, &b}), ValidationError);
}

TEST(LoadInstance, RaggedRowRejected) {
  nlohmann::json schema = {{"relations", {{{"name", "r"}, {"columns", {{{"name", "x"}, {"type", "integer"}}, {{"name", "y"}, {"type", "integer"}}}}}}}};
  std::istringstream table("x,y\n1\n");
  EXPECT_THROW(load_instance(schema, {&table}), ValidationError);
}

TEST(LoadInstance, SaveRoundTrip) {
  auto db = load_instance(kExample / "schema.json");
  auto dir = std::filesystem::temp_directory_path() / "relshap_roundtrip";
  std::filesystem::remove_all(dir);
  save_instance(db, dir);
  auto again = load_instance(dir / "schema.json");
  ASSERT_EQ(again.total_tuples(), db.total_tuples());
  for (std::size_t r = 0; r < db.relations().size(); ++r)
    for (std::size_t row = 0; row < db.relation(r).size(); ++row)
      for (std::size_t c = 0; c < db.relation(r).columns().size(); ++c)
        EXPECT_EQ(db.relation(r).cell(c, row), again.relation(r).cell(c, row));
}

TEST(LoadInstance, LabelsRoundTrip) {
  auto db = load_instance(kExample / "schema.json");
  EXPECT_EQ(db.label(db.parse_label("orders:0")), "orders:0");
  EXPECT_EQ(db.parse_label("10").value, db.parse_label("orders:0").value);
  EXPECT_THROW(db.parse_label("orders:3"), ValidationError);
  EXPECT_THROW(db.parse_label("nosuch:0"), ValidationError);
  EXPECT_THROW(db.parse_label("13"), ValidationError);
}

TEST(Query, ParseAndSerializeRoundTrip) {
  auto spec = parse_query(read_json_file(kExample / "query.json"));
  auto again = parse_query(query_json(spec));
  EXPECT_EQ(query_json(spec), query_json(again));
  EXPECT_EQ(spec.relations.size(), 3u);
  EXPECT_EQ(spec.aggregate.kind, AggregateKind::sum);
}

TEST(Query, ArithmeticParser) {
  auto e = parse_arith("-(2 + 3) * 4 - 1");
  auto db = load_instance(kExample / "schema.json");
  QuerySpec q;
  q.relations = {{"customer", "c"}};
  q.aggregate = {AggregateKind::sum, e};
  q.predicates = {parse_predicate("c.custkey = 1456")};
  EXPECT_EQ(evaluate(q, db, Mask(db)), -21.0);
  EXPECT_THROW(parse_arith("1 / 2"), ValidationError);
  EXPECT_THROW(parse_arith("(1 + 2"), ValidationError);
}

TEST(Query, RejectsUnknownColumnsAndTypes) {
  auto db = load_instance(kExample / "schema.json");
  auto spec = parse_query(read_json_file(kExample / "query.json"));
  auto bad = spec;
  bad.predicates.push_back(parse_predicate("o.nosuch = 1"));
  EXPECT_THROW(bind(bad, db), ValidationError);
  bad = spec;
  bad.relations.push_back({"nosuch", "n"});
  EXPECT_THROW(bind(bad, db), ValidationError);
  bad = spec;
  bad.aggregate.expr = parse_arith("c.mktsegment * 2");
  EXPECT_THROW(bind(bad, db), ValidationError);
}

TEST(Evaluate, ExampleGoldenValues) {
  auto db = load_instance(kExample / "schema.json");
  auto spec = parse_query(read_json_file(kExample / "query.json"));
  auto all = endogenous_mask(db, {"customer:0", "orders:0", "lineitem:0", "lineitem:1", "lineitem:2", "lineitem:3"});
  EXPECT_NEAR(evaluate(spec, db, all), 2319.5, 1e-9);
  auto no_order = endogenous_mask(db, {"customer:0", "lineitem:0", "lineitem:1", "lineitem:2"});
  EXPECT_EQ(evaluate(spec, db, no_order), 0.0);
  auto with_order = endogenous_mask(db, {"customer:0", "orders:0", "lineitem:0", "lineitem:1", "lineitem:2"});
  EXPECT_NEAR(evaluate(spec, db, with_order), 1702.0, 1e-9);
  EXPECT_NEAR(evaluate(spec, db, Mask(db)), 2319.5, 1e-9);
}

TEST(Evaluate, EmptyMaskSumsToZero) {
  auto db = load_instance(kExample / "schema.json");
  auto spec = parse_query(read_json_file(kExample / "query.json"));
  EXPECT_EQ(evaluate(spec, db, endogenous_mask(db, {})), 0.0);
  spec.aggregate = {AggregateKind::count, std::nullopt};
  EXPECT_EQ(evaluate(spec, db, endogenous_mask(db, {})), 0.0);
  EXPECT_EQ(evaluate(spec, db, Mask(db)), 4.0);
}

TEST(Evaluate, MaskRejectsForeignIds) {
  auto db = load_instance(kExample / "schema.json");
  Mask mask(db);
  std::vector<TupleId> ids{db.parse_label("orders:0")};
  EXPECT_THROW(mask.restrict_to(db, *db.find("lineitem"), ids), ValidationError);
}

TEST(Evaluate, CountAndExistsOverCrossPredicates) {
  auto db = load_instance(kExample / "schema.json");
  QuerySpec q;
  q.relations = {{"lineitem", "l"}, {"orders", "o"}};
  q.equijoins = {{{"l", "orderkey"}, {"o", "orderkey"}}};
  q.predicates = {parse_predicate("l.shipdate > o.orderdate"), parse_predicate("o.shippriority <> 1")};
  q.aggregate = {AggregateKind::count, std::nullopt};
  // orders 23417 and 22789 have priority 0; all their lineitems ship after the order date
  EXPECT_EQ(evaluate(q, db, Mask(db)), 6.0);
  q.aggregate = {AggregateKind::exists, std::nullopt};
  EXPECT_EQ(evaluate(q, db, Mask(db)), 1.0);
  q.predicates.push_back(parse_predicate("l.extendedprice >= 10000"));
  EXPECT_EQ(evaluate(q, db, Mask(db)), 0.0);
}

TEST(Evaluate, TextAndDateLiterals) {
  auto db = load_instance(kExample / "schema.json");
  QuerySpec q;
  q.relations = {{"lineitem", "l"}};
  q.predicates = {parse_predicate("l.shipdate >= '1998-04-06'")};
  q.aggregate = {AggregateKind::count, std::nullopt};
  EXPECT_EQ(evaluate(q, db, Mask(db)), 3.0);
  q.relations = {{"customer", "c"}};
  q.predicates = {parse_predicate("c.name < 'Cust2'")};
  EXPECT_EQ(evaluate(q, db, Mask(db)), 1.0);
}

class RandomMasks : public ::testing::TestWithParam<int> {};

TEST_P(RandomMasks, PureMonotoneAndOrderIndependent) {
  auto w = gen_instance(static_cast<std::uint64_t>(GetParam()), {30, 4, 3}, 1.0);
  const auto& db = w.instance;
  QuerySpec exists = w.query;
  exists.aggregate = {AggregateKind::exists, std::nullopt};
  QuerySpec permuted = w.query;
  std::reverse(permuted.relations.begin(), permuted.relations.end());
  QuerySpec wide = w.query;
  wide.predicates.pop_back();  // drop the constant selection

  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  for (int trial = 0; trial < 40; ++trial) {
    Mask small(db), large(db);
    for (std::size_t r = 0; r < db.relations().size(); ++r) {
      std::vector<TupleId> a, b;
      for (std::size_t row = 0; row < db.relation(r).size(); ++row) {
        bool in_small = rng() % 3 == 0;
        bool in_large = in_small || rng() % 2 == 0;
        if (in_small) a.push_back(db.id(r, row));
        if (in_large) b.push_back(db.id(r, row));
      }
      small.restrict_to(db, r, a);
      large.restrict_to(db, r, b);
    }
    EXPECT_LE(evaluate(exists, db, small), evaluate(exists, db, large));
    double x = evaluate(w.query, db, small);
    EXPECT_EQ(x, evaluate(w.query, db, small));
    EXPECT_EQ(x, evaluate(permuted, db, small));
    double y = evaluate(wide, db, large);
    QuerySpec wide_permuted = wide;
    std::rotate(wide_permuted.relations.begin(), wide_permuted.relations.begin() + 1, wide_permuted.relations.end());
    EXPECT_EQ(y, evaluate(wide_permuted, db, large));
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomMasks, ::testing::Range(0, 8));

TEST(Evaluate, SelfJoinIsRejected) {
  auto db = load_instance(kExample / "schema.json");
  QuerySpec q;
  q.relations = {{"orders", "a"}, {"orders", "b"}};
  q.aggregate = {AggregateKind::count, std::nullopt};
  EXPECT_THROW(bind(q, db), ValidationError);
}
