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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/kernel.hpp"
#include "gowermatch/parallel.hpp"
#include "gowermatch/text_io.hpp"

namespace gowermatch {

inline constexpr double kDefaultSimilarityPercentile = 0.95;
inline constexpr double kDefaultConfidenceBudget = 0.05;
inline constexpr std::size_t kMaxTopContributors = 10;

// Similarity threshold d and confidence threshold c.
struct SimilarityParams {
  double d = 0.0;
  double c = 0.0;
  std::string provenance;

  void validate() const {
    ViolationList errors;
    if (!(d >= 0.0 && d <= 1.0)) errors.add("params: d must be in [0, 1]");
    if (!(c >= 0.0 && c <= 1.0)) errors.add("params: c must be in [0, 1]");
    errors.throw_if_any();
  }
};

struct Contributor {
  std::string id;
  double similarity = 0.0;
};

struct MatchResult {
  std::string unlabeled_id;
  // Weighted vote t in [-1, 1]; nullopt when no labeled sample exceeds d.
  std::optional<double> vote;
  // -1, 0 or +1; 0 means no label could be assigned.
  int estimated_label = 0;
  // Imputed estimation-only features, indexed like
  // FeatureSchema::estimation_features(). Present iff estimated_label != 0;
  // an individual entry is missing when no contributor had that feature.
  std::optional<std::vector<FeatureValue>> imputed;
  std::size_t matched_count = 0;
  // Matched labeled samples by similarity, highest first, at most
  // kMaxTopContributors entries.
  std::vector<Contributor> top_contributors;
};

inline int threshold_vote(std::optional<double> vote, double c) {
  if (!vote) return 0;
  if (*vote > c) return 1;
  if (*vote < -c) return -1;
  return 0;
}

namespace detail {

inline void require_labeled(const Dataset& labeled) {
  ViolationList errors;
  for (const Sample& s : labeled.rows)
    if (!s.label) errors.add("labeled row '" + s.id + "' has no label");
  errors.throw_if_any();
}

inline void require_comparable(const Sample& u, const RangeTable& ranges) {
  for (const FeatureRange& e : ranges.entries())
    if (u.features[e.feature]) return;
  throw Error("sample '" + u.id + "' has no similarity feature present");
}

// Weighted mean written as an offset from the first value so a single
// contributor, or identical contributors, reproduce their value exactly.
// The result is clamped to the contributors' hull to absorb rounding.
class WeightedMean {
 public:
  void add(double weight, double value) {
    if (count_ == 0) {
      ref_ = lo_ = hi_ = value;
    } else {
      lo_ = std::min(lo_, value);
      hi_ = std::max(hi_, value);
    }
    num_ += weight * (value - ref_);
    den_ += weight;
    ++count_;
  }

  FeatureValue value() const {
    if (count_ == 0 || den_ <= 0.0) return std::nullopt;
    return std::clamp(ref_ + num_ / den_, lo_, hi_);
  }

 private:
  double ref_ = 0.0, lo_ = 0.0, hi_ = 0.0;
  double num_ = 0.0, den_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace detail

// Similarity-weighted vote of the labeled samples more similar than d to
// `u`, thresholded at c, plus imputation of the estimation-only features
// from the same contributors when the vote is confident.
inline MatchResult estimate_label(const Sample& u, const Dataset& labeled,
                                  const RangeTable& ranges,
                                  const SimilarityParams& params) {
  detail::require_comparable(u, ranges);
  MatchResult result;
  result.unlabeled_id = u.id;

  struct Match {
    std::size_t row;
    double weight;
  };
  std::vector<Match> matches;
  double sum_w = 0.0;
  double sum_wy = 0.0;
  for (std::size_t i = 0; i < labeled.rows.size(); ++i) {
    const Sample& x = labeled.rows[i];
    if (!x.label)
      throw Error("labeled row '" + x.id + "' has no label");
    auto k = try_gower_similarity(x.features, u.features, ranges);
    if (!k || !(*k > params.d)) continue;
    matches.push_back({i, *k});
    sum_w += *k;
    sum_wy += to_int(*x.label) > 0 ? *k : -*k;
  }
  result.matched_count = matches.size();
  if (sum_w > 0.0) result.vote = sum_wy / sum_w;
  result.estimated_label = threshold_vote(result.vote, params.c);

  if (result.estimated_label != 0) {
    const auto& est = labeled.schema.estimation_features();
    std::vector<FeatureValue> imputed(est.size());
    for (std::size_t f = 0; f < est.size(); ++f) {
      detail::WeightedMean mean;
      for (const Match& m : matches)
        if (const auto& v = labeled.rows[m.row].features[est[f]])
          mean.add(m.weight, *v);
      imputed[f] = mean.value();
    }
    result.imputed = std::move(imputed);
  }

  std::stable_sort(matches.begin(), matches.end(),
                   [](const Match& a, const Match& b) {
                     return a.weight > b.weight;
                   });
  const std::size_t top = std::min(matches.size(), kMaxTopContributors);
  for (std::size_t i = 0; i < top; ++i)
    result.top_contributors.push_back(
        {labeled.rows[matches[i].row].id, matches[i].weight});
  return result;
}

// estimate_label over every unlabeled row. Output order follows the input and
// is identical for any worker count.
inline std::vector<MatchResult> match_batch(const Dataset& unlabeled,
                                            const Dataset& labeled,
                                            const RangeTable& ranges,
                                            const SimilarityParams& params,
                                            std::size_t workers = 1) {
  params.validate();
  detail::require_labeled(labeled);
  std::vector<MatchResult> results(unlabeled.size());
  parallel_for(unlabeled.size(), workers, [&](std::size_t j) {
    try {
      results[j] = estimate_label(unlabeled.rows[j], labeled, ranges, params);
    } catch (const Error& e) {
      throw Error("unlabeled row '" + unlabeled.rows[j].id + "': " + e.what());
    }
  });
  return results;
}

// ---------------------------------------------------------------------------
// Threshold calibration

// All N(N-1)/2 pairwise similarities among `rows`, sorted ascending.
inline std::vector<double> pairwise_similarities(const Dataset& rows,
                                                 const RangeTable& ranges,
                                                 std::size_t workers = 1) {
  const std::size_t n = rows.size();
  std::vector<std::vector<double>> per_row(n);
  parallel_for(n, workers, [&](std::size_t i) {
    per_row[i].reserve(n - i - 1);
    for (std::size_t j = i + 1; j < n; ++j)
      per_row[i].push_back(gower_similarity(rows.rows[i], rows.rows[j], ranges));
  });
  std::vector<double> all;
  all.reserve(n * (n - 1) / 2);
  for (auto& v : per_row) all.insert(all.end(), v.begin(), v.end());
  std::sort(all.begin(), all.end());
  return all;
}

// Nearest-rank percentile: element ceil(p * M) - 1 of an ascending list.
inline double nearest_rank(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("nearest_rank: empty list");
  if (!(p >= 0.0 && p <= 1.0)) throw Error("nearest_rank: p must be in [0, 1]");
  const double raw = p * static_cast<double>(sorted.size());
  const double rank = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  const std::size_t idx =
      rank <= 1.0 ? 0 : std::min(sorted.size(), static_cast<std::size_t>(rank)) - 1;
  return sorted[idx];
}

inline double calibrate_similarity_threshold(
    const Dataset& labeled, const RangeTable& ranges,
    double percentile = kDefaultSimilarityPercentile, std::size_t workers = 1) {
  if (labeled.size() < 2)
    throw Error("calibrate_similarity_threshold: need at least 2 labeled rows");
  return nearest_rank(pairwise_similarities(labeled, ranges, workers),
                      percentile);
}

// Smallest c for which strictly fewer than target_fraction of the votes are
// assigned a label (|t| > c). Undefined votes never count as assigned.
inline double confidence_threshold_from_votes(
    const std::vector<std::optional<double>>& votes, double target_fraction) {
  if (votes.empty())
    throw Error("calibrate_confidence_threshold: empty unlabeled set");
  if (!(target_fraction >= 0.0 && target_fraction <= 1.0))
    throw Error("calibrate_confidence_threshold: target must be in [0, 1]");
  // Largest admissible assigned count: count < target * M.
  const double budget = target_fraction * static_cast<double>(votes.size());
  const double limit = std::ceil(budget - 1e-9 * std::max(1.0, budget)) - 1.0;
  if (limit < 0.0) return 1.0;
  const auto max_assigned = static_cast<std::size_t>(limit);

  std::vector<double> magnitudes;
  for (const auto& t : votes)
    if (t) magnitudes.push_back(std::abs(*t));
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());
  // With c equal to the (max_assigned + 1)-th largest |t|, at most
  // max_assigned votes are strictly above c; any smaller c admits more.
  if (magnitudes.size() <= max_assigned) return 0.0;
  return std::clamp(magnitudes[max_assigned], 0.0, 1.0);
}

inline std::vector<std::optional<double>> compute_votes(
    const Dataset& unlabeled, const Dataset& labeled, const RangeTable& ranges,
    double d, std::size_t workers = 1) {
  SimilarityParams probe{d, 1.0, "vote sweep"};
  auto results = match_batch(unlabeled, labeled, ranges, probe, workers);
  std::vector<std::optional<double>> votes;
  votes.reserve(results.size());
  for (const auto& r : results) votes.push_back(r.vote);
  return votes;
}

inline double calibrate_confidence_threshold(
    const Dataset& labeled, const Dataset& unlabeled, const RangeTable& ranges,
    double d, double target_fraction = kDefaultConfidenceBudget,
    std::size_t workers = 1) {
  if (unlabeled.empty())
    throw Error("calibrate_confidence_threshold: empty unlabeled set");
  return confidence_threshold_from_votes(
      compute_votes(unlabeled, labeled, ranges, d, workers), target_fraction);
}

inline double assigned_fraction(const std::vector<std::optional<double>>& votes,
                                double c) {
  if (votes.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& t : votes) n += threshold_vote(t, c) != 0;
  return static_cast<double>(n) / static_cast<double>(votes.size());
}

// ---------------------------------------------------------------------------
// Serialization

// Columns: id, t, y_hat, matched_count, then one per estimation-only feature.
inline std::string format_match_results(const std::vector<MatchResult>& results,
                                        const FeatureSchema& schema) {
  std::vector<std::string> header{"id", "t", "y_hat", "matched_count"};
  for (std::size_t k : schema.estimation_features())
    header.push_back(schema.feature_names()[k]);
  std::string out = join_csv_record(header) + "\n";
  const std::size_t n_est = schema.estimation_features().size();
  for (const auto& r : results) {
    std::vector<std::string> f{r.unlabeled_id,
                               r.vote ? format_double(*r.vote) : "",
                               std::to_string(r.estimated_label),
                               std::to_string(r.matched_count)};
    for (std::size_t i = 0; i < n_est; ++i) {
      const FeatureValue* v = r.imputed ? &(*r.imputed)[i] : nullptr;
      f.push_back(v && *v ? format_double(**v) : "");
    }
    out += join_csv_record(f) + "\n";
  }
  return out;
}

inline std::vector<MatchResult> parse_match_results(const CsvTable& table,
                                                    const FeatureSchema& schema) {
  ViolationList errors;
  std::vector<std::string> expected{"id", "t", "y_hat", "matched_count"};
  for (std::size_t k : schema.estimation_features())
    expected.push_back(schema.feature_names()[k]);
  if (table.header != expected) {
    errors.add("match file: header does not match schema (expected " +
               join_csv_record(expected) + ")");
    errors.throw_if_any();
  }
  std::vector<MatchResult> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& c = table.rows[r];
    const std::string where = "match file row " + std::to_string(r + 1);
    if (c.size() != expected.size()) {
      errors.add(where + ": wrong column count");
      continue;
    }
    MatchResult m;
    m.unlabeled_id = c[0];
    if (!c[1].empty()) {
      m.vote = parse_double(c[1]);
      if (!m.vote) errors.add(where + ": bad vote '" + c[1] + "'");
    }
    auto y = parse_integer(c[2]);
    if (!y || *y < -1 || *y > 1) errors.add(where + ": bad y_hat '" + c[2] + "'");
    else m.estimated_label = static_cast<int>(*y);
    auto cnt = parse_integer(c[3]);
    if (!cnt || *cnt < 0) errors.add(where + ": bad matched_count");
    else m.matched_count = static_cast<std::size_t>(*cnt);
    if (m.estimated_label != 0) {
      std::vector<FeatureValue> imputed;
      for (std::size_t i = 4; i < c.size(); ++i) {
        if (c[i].empty()) imputed.push_back(std::nullopt);
        else if (auto v = parse_double(c[i])) imputed.push_back(*v);
        else errors.add(where + ": bad imputed value '" + c[i] + "'");
      }
      m.imputed = std::move(imputed);
    }
    out.push_back(std::move(m));
  }
  errors.throw_if_any();
  return out;
}

// Sidecar keyed by unlabeled id: matched contributors with their similarity.
inline std::string format_contributors(const std::vector<MatchResult>& results) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : results) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : r.top_contributors)
      arr.push_back({{"id", c.id}, {"similarity", c.similarity}});
    j[r.unlabeled_id] = std::move(arr);
  }
  return j.dump(2) + "\n";
}

}  // namespace gowermatch
