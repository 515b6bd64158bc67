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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "relshap/relshap.hpp"

using namespace relshap;
using fixtures::example_with_items;

namespace {

Coalition coalition_of(const GameContext& ctx, std::vector<std::string> labels) {
  std::vector<TupleId> ids;
  for (const auto& l : labels) ids.push_back(ctx.instance().parse_label(l));
  return Coalition::from_ids(ctx.partition(), ids);
}

}  // namespace

TEST(ShapleyWeight, Examples) {
  EXPECT_NEAR(shapley_weight(0, 6), 1.0 / 6, 1e-15);
  EXPECT_NEAR(shapley_weight(5, 6), 1.0 / 6, 1e-15);
  EXPECT_NEAR(shapley_weight(2, 6), 2.0 * 6 / 720, 1e-15);
  EXPECT_THROW(shapley_weight(6, 6), DomainError);
  EXPECT_THROW(shapley_weight(0, 0), DomainError);
}

TEST(ShapleyWeight, NormalizesAndMatchesFactorials) {
  for (std::size_t n : {1u, 2u, 5u, 10u, 20u, 40u, 64u}) {
    long double total = 0;
    long double c = 1;  // C(n-1, s)
    for (std::size_t s = 0; s < n; ++s) {
      total += c * shapley_weight(s, n);
      if (n <= 20) {
        EXPECT_NEAR(shapley_weight(s, n), oracle::factorial(s) * oracle::factorial(n - s - 1) / oracle::factorial(n),
                    1e-15);
      }
      c = c * static_cast<long double>(n - 1 - s) / static_cast<long double>(s + 1);
    }
    EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-12) << n;
  }
}

TEST(Marginal, ExampleValues) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  auto o1 = w.instance.parse_label("orders:0");
  EXPECT_NEAR(marginal(ctx, coalition_of(ctx, {"customer:0", "lineitem:0", "lineitem:1", "lineitem:2"}), o1), 1702.0,
              1e-9);
  EXPECT_EQ(marginal(ctx, Coalition(ctx.players()), w.instance.parse_label("lineitem:0")), 0.0);
  EXPECT_THROW(marginal(ctx, coalition_of(ctx, {"orders:0"}), o1), DomainError);
  EXPECT_THROW(marginal(ctx, Coalition(ctx.players()), w.instance.parse_label("lineitem:4")), DomainError);
  EXPECT_THROW(coalition_of(ctx, {"customer:1"}), DomainError);
}

TEST(Marginal, MatchesClosedForm) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  oracle::Example1 ex;
  auto o1 = w.instance.parse_label("orders:0");
  // players are l1..l4, c1, o1 in index order
  for (unsigned bits = 0; bits < 32; ++bits) {
    Coalition s(6);
    std::vector<bool> items(4);
    for (unsigned i = 0; i < 4; ++i)
      if (bits >> i & 1) s.insert(i), items[i] = true;
    bool c1 = bits >> 4 & 1;
    if (c1) s.insert(4);
    double expect = ex.v(c1, true, items) - ex.v(c1, false, items);
    EXPECT_NEAR(marginal(ctx, s, o1), expect, 1e-9);
  }
}

TEST(ExactOracles, ExampleValuesAgainstClosedForm) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  oracle::Example1 ex;
  const double total = std::accumulate(ex.terms.begin(), ex.terms.end(), 0.0);
  EXPECT_NEAR(total, 2319.5, 1e-9);
  auto o1 = w.instance.parse_label("orders:0");
  auto c1 = w.instance.parse_label("customer:0");
  EXPECT_NEAR(exact_shapley(ctx, o1), total / 3, 1e-9);
  EXPECT_NEAR(exact_shapley(ctx, c1), total / 3, 1e-9);
  EXPECT_NEAR(exact_banzhaf(ctx, o1), total / 4, 1e-9);
  EXPECT_NEAR(exact_banzhaf(ctx, o1), 579.875, 1e-9);
  for (int i = 0; i < 4; ++i) {
    auto l = w.instance.parse_label("lineitem:" + std::to_string(i));
    // l_i contributes its term exactly when c1 and o1 both precede it: probability 1/3
    EXPECT_NEAR(exact_shapley(ctx, l), ex.terms[static_cast<std::size_t>(i)] / 3, 1e-9);
    // Banzhaf: c1 and o1 both present in a quarter of the coalitions
    EXPECT_NEAR(exact_banzhaf(ctx, l), ex.terms[static_cast<std::size_t>(i)] / 4, 1e-9);
  }
  double sum = 0;
  for (auto t : ctx.partition().players()) sum += exact_shapley(ctx, t);
  EXPECT_NEAR(sum, 2319.5, 1e-9);
}

TEST(ExactOracles, PermutationFormAgreesOnExample) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  for (auto t : ctx.partition().players()) EXPECT_NEAR(exact_shapley_perm(ctx, t), exact_shapley(ctx, t), 1e-9);
}

TEST(ExactOracles, NonPlayersGetZero) {
  auto w = example1();
  GameContext ctx(w.instance, w.query);
  for (auto l : {"lineitem:4", "customer:1", "orders:2"}) {
    auto t = w.instance.parse_label(l);
    EXPECT_EQ(exact_shapley(ctx, t), 0.0);
    EXPECT_EQ(exact_shapley_perm(ctx, t), 0.0);
    EXPECT_EQ(exact_banzhaf(ctx, t), 0.0);
  }
}

TEST(ExactOracles, SinglePlayerGame) {
  auto w = example1();
  QuerySpec q;
  q.relations = {{"customer", "c"}};
  q.predicates = {parse_predicate("c.mktsegment = 'AUTO'")};
  q.aggregate = {AggregateKind::sum, parse_arith("c.acctbal")};
  GameContext ctx(w.instance, q);
  ASSERT_EQ(ctx.players(), 1u);
  auto c1 = w.instance.parse_label("customer:0");
  EXPECT_EQ(exact_shapley(ctx, c1), 6800.0);
  EXPECT_EQ(exact_shapley_perm(ctx, c1), 6800.0);
  EXPECT_EQ(exact_banzhaf(ctx, c1), 6800.0);
}

TEST(ExactOracles, CapsAreEnforced) {
  auto w = gen_instance(3, {60, 2, 2}, 0.5);
  GameOptions opts;
  opts.exact_cap = 8;
  GameContext ctx(w.instance, w.query, opts);
  ASSERT_GT(ctx.players(), 9u);
  auto t = ctx.partition().players()[0];
  EXPECT_THROW(exact_shapley(ctx, t), CapExceeded);
  EXPECT_THROW(exact_banzhaf(ctx, t), CapExceeded);
  EXPECT_THROW(exact_shapley_perm(ctx, t), CapExceeded);
}

TEST(ExactOracles, WorkerCountDoesNotChangeTheValue) {
  auto w = gen_instance(5, {30, 3, 2}, 1.0);
  GameContext ctx(w.instance, w.query);
  auto t = ctx.partition().players().back();
  double one = exact_shapley(ctx, t, 1);
  EXPECT_EQ(one, exact_shapley(ctx, t, 3));
  EXPECT_EQ(exact_banzhaf(ctx, t, 1), exact_banzhaf(ctx, t, 4));
}

TEST(ExactOracles, TwinsAreSymmetric) {
  auto w = example_with_items({{500, 0.1, "1998-04-21"}, {500, 0.1, "1998-04-21"}, {700, 0.06, "1998-04-06"}});
  GameContext ctx(w.instance, w.query);
  ASSERT_EQ(ctx.players(), 5u);
  auto a = w.instance.parse_label("lineitem:0"), b = w.instance.parse_label("lineitem:1");
  EXPECT_NEAR(exact_shapley(ctx, a), exact_shapley(ctx, b), 1e-9);
  EXPECT_NEAR(exact_shapley_perm(ctx, a), exact_shapley_perm(ctx, b), 1e-9);
}

TEST(ExactOracles, NegativeTermGivesNegativeValue) {
  // a discount above 1 turns the revenue term negative
  auto w = example_with_items({{500, 1.5, "1998-04-21"}, {600, 0.01, "1998-04-16"}});
  GameContext ctx(w.instance, w.query);
  auto l = w.instance.parse_label("lineitem:0");
  EXPECT_LT(exact_shapley(ctx, l), 0.0);
  EXPECT_NEAR(exact_shapley(ctx, l), -250.0 / 3, 1e-9);
}

TEST(GameContext, EvaluatorsAgreeAndEmptyValueIsCached) {
  auto w = gen_instance(9, {40, 3, 2}, 1.0);
  GameContext ctx(w.instance, w.query);
  Coalition all(ctx.players());
  for (std::size_t i = 0; i < ctx.players(); ++i) all.insert(i);
  EXPECT_EQ(ctx.value(all, EvaluatorKind::naive), ctx.value(all, EvaluatorKind::compiled));
  EXPECT_EQ(ctx.empty_value(), ctx.evaluate(Coalition(ctx.players()), EvaluatorKind::naive));
  GameOptions naive;
  naive.evaluator = EvaluatorKind::naive;
  GameContext plain(w.instance, w.query, naive);
  EXPECT_EQ(plain.view(), nullptr);
  EXPECT_THROW(plain.evaluate(all, EvaluatorKind::compiled), ValidationError);
  EXPECT_EQ(plain.full_value(), ctx.full_value());
}

class RandomGames : public ::testing::TestWithParam<int> {};

TEST_P(RandomGames, OraclesAgreeWithBruteForceAndAxioms) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  auto w = gen_instance(seed, {4 + seed % 12, 2 + seed % 3, 2}, 1.0);
  GameContext ctx(w.instance, w.query);
  ASSERT_LE(ctx.players(), 12u);
  const auto& players = ctx.partition().players();
  EXPECT_EQ(players, oracle::lineage(w.query, w.instance));
  double sum = 0;
  for (std::size_t i = 0; i < players.size(); ++i) {
    double phi = exact_shapley(ctx, players[i]);
    sum += phi;
    EXPECT_NEAR(phi, oracle::shapley(w.query, w.instance, players, i), 1e-9 * std::max(1.0, std::abs(phi)));
    if (players.size() <= 7) {
      EXPECT_NEAR(phi, exact_shapley_perm(ctx, players[i]), 1e-9 * std::max(1.0, std::abs(phi)));
      EXPECT_NEAR(exact_banzhaf(ctx, players[i]), oracle::banzhaf(w.query, w.instance, players, i),
                  1e-9 * std::max(1.0, std::abs(phi)));
    }
  }
  double span = ctx.full_value() - ctx.empty_value();
  EXPECT_NEAR(sum, span, 1e-6 * std::max(1.0, std::abs(span)));
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomGames, ::testing::Range(0, 16));
