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

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "gowermatch/dataset.hpp"
#include "gowermatch/parallel.hpp"
#include "gowermatch/schema.hpp"

namespace gowermatch::synthetic {

// Two Gaussian clusters in the similarity features. Cluster A carries label
// +1, cluster B label -1 (before label noise). Estimation-only features depend
// on the cluster and are present only in labeled rows.
struct TwoClusterSpec {
  std::size_t labeled_per_cluster = 20;
  std::size_t unlabeled_per_cluster = 400;
  std::size_t similarity_features = 4;
  std::size_t estimation_features = 1;
  // Distance between the cluster centers, in units of the per-feature
  // standard deviation.
  double separation = 4.0;
  // Probability that a labeled row's label is flipped.
  double label_noise = 0.0;
  std::uint64_t seed = 1;
};

struct TwoClusterData {
  FeatureSchema schema;
  Dataset labeled;
  Dataset unlabeled;
  // Generating cluster label (+1 / -1) of every unlabeled row.
  std::vector<int> unlabeled_cluster;
  // Signed distance (standard deviations) of every unlabeled row from the
  // hyperplane bisecting the two centers; small |margin| is the overlap.
  std::vector<double> unlabeled_margin;
};

inline FeatureSchema two_cluster_schema(std::size_t similarity,
                                        std::size_t estimation) {
  std::vector<ColumnSpec> cols{{"id", Role::kId},
                               {"timestamp", Role::kTimestamp},
                               {"label", Role::kLabel}};
  for (std::size_t k = 0; k < similarity; ++k)
    cols.push_back({"x" + std::to_string(k + 1), Role::kSimilarity});
  for (std::size_t k = 0; k < estimation; ++k)
    cols.push_back({"e" + std::to_string(k + 1), Role::kEstimationOnly});
  return FeatureSchema::create(std::move(cols));
}

inline double gaussian(Rng& rng) {
  const double u1 = rng.uniform_open_zero();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::string iso_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT00:00:00Z",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

inline TwoClusterData make_two_clusters(const TwoClusterSpec& spec) {
  using namespace std::chrono;
  TwoClusterData out;
  out.schema = two_cluster_schema(spec.similarity_features, spec.estimation_features);
  out.labeled.schema = out.schema;
  out.unlabeled.schema = out.schema;
  out.labeled.provenance = "synthetic two-cluster labeled (seed " +
                           std::to_string(spec.seed) + ")";
  out.unlabeled.provenance = "synthetic two-cluster unlabeled (seed " +
                             std::to_string(spec.seed) + ")";
  const std::size_t dim = spec.similarity_features;
  const double offset = spec.separation / 2.0 / std::sqrt(static_cast<double>(dim));
  const sys_days start = sys_days{year{2020} / January / 1};
  Rng rng(spec.seed, 0);

  auto draw = [&](int cluster, bool labeled, std::size_t index) {
    Sample s;
    s.features.assign(out.schema.feature_count(), std::nullopt);
    const double center = cluster > 0 ? offset : -offset;
    double proj = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = center + gaussian(rng);
      s.features[out.schema.similarity_features()[k]] = v;
      proj += v;
    }
    const double margin = proj / std::sqrt(static_cast<double>(dim));
    if (labeled) {
      for (std::size_t k = 0; k < spec.estimation_features; ++k)
        s.features[out.schema.estimation_features()[k]] =
            (cluster > 0 ? 10.0 : 5.0) + static_cast<double>(k) + 0.5 * margin +
            0.5 * gaussian(rng);
      int y = cluster;
      if (rng.uniform() < spec.label_noise) y = -y;
      s.label = y > 0 ? Label::kPositive : Label::kNegative;
    }
    s.id = std::string(labeled ? "L" : "U") + std::to_string(index);
    return std::pair{std::move(s), margin};
  };

  // Labeled rows alternate clusters so any time cut keeps both labels.
  const std::size_t n_lab = 2 * spec.labeled_per_cluster;
  for (std::size_t i = 0; i < n_lab; ++i) {
    auto [s, margin] = draw(i % 2 == 0 ? 1 : -1, true, i);
    s.timestamp = *parse_timestamp(iso_date(start + days{static_cast<int>(i)}));
    out.labeled.rows.push_back(std::move(s));
  }
  const std::size_t n_unl = 2 * spec.unlabeled_per_cluster;
  for (std::size_t i = 0; i < n_unl; ++i) {
    const int cluster = i % 2 == 0 ? 1 : -1;
    auto [s, margin] = draw(cluster, false, i);
    s.timestamp = *parse_timestamp(
        iso_date(start + days{static_cast<int>(i * n_lab / std::max<std::size_t>(1, n_unl))}));
    out.unlabeled.rows.push_back(std::move(s));
    out.unlabeled_cluster.push_back(cluster);
    out.unlabeled_margin.push_back(margin);
  }
  return out;
}

}  // namespace gowermatch::synthetic
