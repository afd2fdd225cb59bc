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

#include <cmath>
#include <random>
#include <vector>

#include "gowermatch/eval.hpp"
#include "gowermatch/model.hpp"
#include "gowermatch/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace gowermatch {
namespace {

using testing::make_sample;
using testing::make_schema;
using testing::TempDir;
using testing::write_text;

Dataset NoisyData(std::uint64_t seed, std::size_t per_cluster = 60) {
  synthetic::TwoClusterSpec spec;
  spec.labeled_per_cluster = per_cluster;
  spec.unlabeled_per_cluster = 1;
  spec.separation = 1.5;
  spec.label_noise = 0.2;
  spec.seed = seed;
  return synthetic::make_two_clusters(spec).labeled;
}

TEST(TrainLogisticTest, SeparableOneDimensionalData) {
  Dataset d;
  d.schema = make_schema({"x"});
  for (int i = 0; i < 20; ++i)
    d.rows.push_back(make_sample("r" + std::to_string(i), {i * 0.5}, i < 10 ? -1 : 1));
  TrainOptions opt;
  opt.max_iterations = 500;
  LinearModel m = train_logistic(d, {"x"}, opt);
  ScoreFile s = predict_scores(m, d);
  EXPECT_EQ(auc_roc(s, d), 1.0);
  EXPECT_GT(m.weights[0], 0.0);
  for (const auto& r : s.rows) {
    EXPECT_GT(r.score, 0.0);
    EXPECT_LT(r.score, 1.0);
  }
}

TEST(TrainLogisticTest, AnalyticGradientMatchesFiniteDifferences) {
  Dataset d = NoisyData(4);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.5);
  for (double l2 : {0.0, 0.7}) {
    LinearModel frame = train_logistic(d, all_features(d.schema), {{0, 0}, 1, 1e-9, 0});
    auto obj = make_logistic_objective(d, frame, l2);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> x(obj.dimension());
      for (auto& v : x) v = n(rng);
      auto g = obj.gradient(x);
      auto fd = oracle::finite_difference_gradient(
          [&](const std::vector<double>& v) { return obj.value(v); }, x, 1e-5);
      double diff = 0.0, norm = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        diff += (g[k] - fd[k]) * (g[k] - fd[k]);
        norm += g[k] * g[k];
      }
      EXPECT_LE(std::sqrt(diff / norm), 1e-5);
    }
  }
}

TEST(TrainLogisticTest, ObjectiveNeverIncreases) {
  Dataset d = NoisyData(5);
  for (Regularization reg : {Regularization{0, 0}, Regularization{0.05, 0.1},
                             Regularization{0.2, 0}}) {
    LinearModel m = train_logistic(d, all_features(d.schema), {reg, 300, 1e-9, 0});
    ASSERT_GE(m.objective_trace.size(), 2u);
    for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
      EXPECT_LE(m.objective_trace[i], m.objective_trace[i - 1]);
  }
}

TEST(TrainLogisticTest, L2SweepShrinksWeights) {
  Dataset d = NoisyData(6);
  double prev = INFINITY;
  for (double l2 : {0.0, 0.1, 1.0, 10.0}) {
    LinearModel m = train_logistic(d, all_features(d.schema), {{0, l2}, 5000, 1e-10, 0});
    EXPECT_LE(m.weight_norm(), prev);
    prev = m.weight_norm();
  }
}

TEST(TrainLogisticTest, StrongL1ZeroesWeights) {
  Dataset d = NoisyData(7);
  LinearModel m = train_logistic(d, all_features(d.schema), {{10.0, 0}, 500, 1e-9, 0});
  for (double w : m.weights) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(m.stop_reason, StopReason::kTolerance);
}

TEST(TrainLogisticTest, DeterministicAndSerializable) {
  Dataset d = NoisyData(8);
  TrainOptions opt{{0.01, 0.1}, 400, 1e-8, 42};
  LinearModel a = train_logistic(d, all_features(d.schema), opt);
  LinearModel b = train_logistic(d, all_features(d.schema), opt);
  EXPECT_EQ(a.to_json(), b.to_json());
  LinearModel back = LinearModel::from_json(a.to_json());
  EXPECT_EQ(back.weights, a.weights);
  EXPECT_EQ(back.intercept, a.intercept);
  EXPECT_EQ(back.options.seed, 42u);
  EXPECT_EQ(format_scores(predict_scores(back, d)), format_scores(predict_scores(a, d)));
}

TEST(TrainLogisticTest, SingleClassAndConstantFeatures) {
  Dataset d;
  d.schema = make_schema({"x", "k"});
  for (int i = 0; i < 6; ++i)
    d.rows.push_back(make_sample(std::to_string(i), {1.0 * i, 3.0}, 1));
  EXPECT_THROW(train_logistic(d, {"x", "k"}, {}), ValidationError);
  d.rows[0].label = Label::kNegative;
  d.rows[1].label = Label::kNegative;
  LinearModel m = train_logistic(d, {"x", "k"}, {});
  EXPECT_EQ(m.features, std::vector<std::string>{"x"});
  EXPECT_EQ(m.dropped_features, std::vector<std::string>{"k"});
}

TEST(TrainLogisticTest, MissingCellsUseTrainMean) {
  Dataset d;
  d.schema = make_schema({"x"}, {"e"});
  d.rows = {make_sample("a", {0.0, 1.0}, -1), make_sample("b", {1.0, std::nullopt}, -1),
            make_sample("c", {2.0, 5.0}, 1), make_sample("d", {3.0, 3.0}, 1)};
  LinearModel m = train_logistic(d, {"x", "e"}, {});
  EXPECT_DOUBLE_EQ(m.means[1], 3.0);
}

TEST(PredictScoresTest, ZeroModelScoresOneHalf) {
  LinearModel m;
  m.features = {"x"};
  m.weights = {0.0};
  m.means = {0.0};
  m.scales = {1.0};
  Dataset d;
  d.schema = make_schema({"x"});
  d.rows = {make_sample("a", {-3.0}), make_sample("b", {8.0})};
  for (const auto& r : predict_scores(m, d).rows) EXPECT_EQ(r.score, 0.5);

  m.weights = {1.0};
  m.means = {2.0};
  m.scales = {4.0};
  d.rows = {make_sample("c", {2.0})};  // standardized value 0
  EXPECT_EQ(predict_scores(m, d).rows[0].score, 0.5);
}

TEST(PredictScoresTest, MatchesHandEvaluation) {
  LinearModel m;
  m.features = {"x", "e"};
  m.weights = {0.75, -1.25};
  m.means = {1.0, 10.0};
  m.scales = {2.0, 0.5};
  m.intercept = 0.3;
  Dataset d;
  d.schema = make_schema({"x"}, {"e"});
  d.rows = {make_sample("a", {4.0, 9.0}), make_sample("b", {-1.0, std::nullopt})};
  auto s = predict_scores(m, d);
  // z_a = 0.3 + 0.75 * 1.5 - 1.25 * (-2) = 3.925
  EXPECT_NEAR(s.rows[0].score, 1.0 / (1.0 + std::exp(-3.925)), 1e-12);
  // z_b = 0.3 + 0.75 * (-1) + 0 = -0.45 (missing e -> mean)
  EXPECT_NEAR(s.rows[1].score, 1.0 / (1.0 + std::exp(0.45)), 1e-12);
}

TEST(ScoreFileTest, LoadsAndValidates) {
  TempDir dir;
  write_text(dir / "svm.csv", "id,score\na,0.1\nb,0.9\nc,0.5\n");
  ScoreFile s = load_external_scores(dir / "svm.csv");
  EXPECT_EQ(s.model_name, "svm");
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_EQ(s.rows[1].score, 0.9);

  write_text(dir / "bad.csv", "id,score\na,0.1\nb,1.2\n");
  try {
    load_external_scores(dir / "bad.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  write_text(dir / "dup.csv", "id,score\na,0.1\nzz,0.2\nzz,0.3\n");
  try {
    load_external_scores(dir / "dup.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

}  // namespace
}  // namespace gowermatch
