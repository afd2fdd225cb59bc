/*
 * Copyright 2026 The gowermatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <vector>

#include "gowermatch/kernel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace gowermatch {
namespace {

using testing::fixed_ranges;
using testing::make_sample;
using testing::make_schema;
using testing::numbered_schema;

std::vector<double> RangeValues(const RangeTable& t) {
  std::vector<double> r;
  for (const auto& e : t.entries()) r.push_back(e.range);
  return r;
}

TEST(ComputeRangesTest, SingleRowGivesZeroRanges) {
  Dataset d;
  d.schema = make_schema({"a", "b"});
  d.rows.push_back(make_sample("x", {3.0, -1.0}, 1));
  RangeTable t = compute_ranges(d, d.schema);
  EXPECT_EQ(RangeValues(t), (std::vector<double>{0.0, 0.0}));
}

TEST(ComputeRangesTest, MaxMinusMin) {
  Dataset d;
  d.schema = make_schema({"a"});
  for (double v : {1.0, 5.0, 9.0}) d.rows.push_back(make_sample(std::to_string(v), {v}));
  EXPECT_EQ(RangeValues(compute_ranges(d, d.schema)), std::vector<double>{8.0});
}

TEST(ComputeRangesTest, PoolsAcrossSources) {
  Dataset a, b;
  a.schema = b.schema = make_schema({"f"});
  a.rows = {make_sample("a0", {0.0}), make_sample("a1", {2.0})};
  b.rows = {make_sample("b0", {-1.0}), make_sample("b1", {3.0}),
            make_sample("b2", {std::nullopt})};
  std::reference_wrapper<const Dataset> both[] = {a, b};
  RangeTable t = compute_ranges(both, a.schema);
  EXPECT_EQ(RangeValues(t), std::vector<double>{4.0});
  EXPECT_EQ(t.entries()[0].min, -1.0);
  EXPECT_EQ(t.entries()[0].max, 3.0);
}

TEST(ComputeRangesTest, FeatureMissingEverywhereIsAnError) {
  Dataset d;
  d.schema = make_schema({"a", "b"});
  d.rows.push_back(make_sample("x", {1.0, std::nullopt}));
  EXPECT_THROW(compute_ranges(d, d.schema), ValidationError);
}

TEST(ComputeRangesTest, JsonRoundTrip) {
  Dataset d;
  d.schema = make_schema({"a", "b"});
  d.rows = {make_sample("x", {0.1, 7.0}), make_sample("y", {0.7, -2.5})};
  RangeTable t = compute_ranges(d, d.schema);
  RangeTable back = RangeTable::from_json(t.to_json(), d.schema);
  ASSERT_EQ(back.entries().size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.entries()[i].range, t.entries()[i].range);
    EXPECT_EQ(back.entries()[i].min, t.entries()[i].min);
    EXPECT_EQ(back.entries()[i].max, t.entries()[i].max);
  }
  EXPECT_THROW(RangeTable::from_json(R"({"ranges":{"a":1}})", d.schema), ValidationError);
  EXPECT_THROW(RangeTable::from_json(R"({"ranges":{"a":1,"b":-1}})", d.schema),
               ValidationError);
}

TEST(GowerSimilarityTest, IdenticalSamplesScoreOne) {
  auto schema = make_schema({"a", "b", "c"});
  auto r = fixed_ranges(schema, {1.0, 2.0, 0.0});
  auto s = make_sample("s", {0.3, 1.0, 5.0});
  EXPECT_EQ(gower_similarity(s, s, r), 1.0);
}

TEST(GowerSimilarityTest, TwoFeatureHandExample) {
  auto schema = make_schema({"a", "b"});
  auto r = fixed_ranges(schema, {10.0, 4.0});
  EXPECT_DOUBLE_EQ(gower_similarity(make_sample("a", {0.0, 0.0}),
                                    make_sample("b", {5.0, 2.0}), r),
                   0.5);
}

TEST(GowerSimilarityTest, OneFeatureOffByTenPercentOfRange) {
  // Nine identical features and one differing by 10% of its range.
  auto schema = numbered_schema(10);
  std::vector<double> ranges(10, 4.0);
  auto r = fixed_ranges(schema, ranges);
  std::vector<FeatureValue> a(10, 1.0), b(10, 1.0);
  b[6] = 1.4;
  const double got = gower_similarity(make_sample("a", a), make_sample("b", b), r);
  const auto want = oracle::gower(a, b, schema.similarity_features(), ranges);
  EXPECT_NEAR(*want, 0.99, 1e-12);
  EXPECT_NEAR(got, *want, 1e-12);
}

TEST(GowerSimilarityTest, DegenerateAndOutOfRangeFeatures) {
  auto schema = make_schema({"a", "b"});
  auto r = fixed_ranges(schema, {0.0, 1.0});
  // r = 0: equal -> 1, different -> 0; difference beyond range clamps to 0.
  EXPECT_EQ(gower_similarity(make_sample("x", {2.0, 0.0}), make_sample("y", {2.0, 5.0}), r),
            0.5);
  EXPECT_EQ(gower_similarity(make_sample("x", {2.0, 0.0}), make_sample("y", {3.0, 5.0}), r),
            0.0);
}

TEST(GowerSimilarityTest, NoCoPresentFeatureIsAnError) {
  auto schema = make_schema({"a", "b"});
  auto r = fixed_ranges(schema, {1.0, 1.0});
  EXPECT_THROW(gower_similarity(make_sample("x", {1.0, std::nullopt}),
                                make_sample("y", {std::nullopt, 1.0}), r),
               Error);
}

class GowerPropertyTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{2024};

  std::vector<FeatureValue> RandomRow(std::size_t n, double missing) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_real_distribution<double> p(0.0, 1.0);
    std::vector<FeatureValue> v(n);
    for (auto& x : v)
      if (p(rng) >= missing) x = p(rng) < 0.2 ? std::round(u(rng)) : u(rng);
    return v;
  }
};

TEST_F(GowerPropertyTest, SymmetryBoundsAndOracleAgreement) {
  std::uniform_real_distribution<double> ur(0.0, 8.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    auto schema = numbered_schema(n);
    std::vector<double> ranges(n);
    for (auto& r : ranges) r = rng() % 7 == 0 ? 0.0 : ur(rng);
    auto table = fixed_ranges(schema, ranges);
    auto a = RandomRow(n, 0.2), b = RandomRow(n, 0.2);
    auto want = oracle::gower(a, b, schema.similarity_features(), ranges);
    auto ab = try_gower_similarity(a, b, table);
    auto ba = try_gower_similarity(b, a, table);
    ASSERT_EQ(ab.has_value(), want.has_value());
    if (!want) continue;
    EXPECT_EQ(*ab, *ba);
    EXPECT_GE(*ab, 0.0);
    EXPECT_LE(*ab, 1.0);
    EXPECT_NEAR(*ab, *want, 1e-12);
  }
}

TEST_F(GowerPropertyTest, MissingFeatureIsExcluded) {
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 18;
    auto schema = numbered_schema(n);
    auto table = fixed_ranges(schema, std::vector<double>(n, 3.0));
    auto a = RandomRow(n, 0.0), b = RandomRow(n, 0.0);
    const std::size_t drop = rng() % n;
    // Similarity over the other features alone.
    auto schema_rest = numbered_schema(n - 1);
    auto table_rest = fixed_ranges(schema_rest, std::vector<double>(n - 1, 3.0));
    std::vector<FeatureValue> a_rest, b_rest;
    for (std::size_t k = 0; k < n; ++k)
      if (k != drop) {
        a_rest.push_back(a[k]);
        b_rest.push_back(b[k]);
      }
    auto a_missing = a;
    a_missing[drop] = std::nullopt;
    EXPECT_DOUBLE_EQ(*try_gower_similarity(a_missing, b, table),
                     *try_gower_similarity(a_rest, b_rest, table_rest));
  }
}

TEST_F(GowerPropertyTest, SelfSimilarityAndMonotonicity) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    auto schema = numbered_schema(n);
    auto table = fixed_ranges(schema, std::vector<double>(n, 10.0));
    auto a = RandomRow(n, 0.0);
    EXPECT_EQ(*try_gower_similarity(a, a, table), 1.0);
    auto b = RandomRow(n, 0.0);
    const std::size_t k = rng() % n;
    const double before = *try_gower_similarity(a, b, table);
    // Move b_k toward a_k: similarity must not drop.
    auto closer = b;
    *closer[k] = *a[k] + (*b[k] - *a[k]) * u(rng);
    EXPECT_GE(*try_gower_similarity(a, closer, table), before - 1e-15);
  }
}

}  // namespace
}  // namespace gowermatch
