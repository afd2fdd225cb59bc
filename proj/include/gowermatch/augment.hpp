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
#include <array>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/matcher.hpp"
#include "gowermatch/text_io.hpp"

namespace gowermatch {

inline constexpr std::string_view kSourceColumn = "source";
inline constexpr std::string_view kSourceIdColumn = "source_id";
inline constexpr std::string_view kVoteColumn = "vote";
inline constexpr std::string_view kMatchedCountColumn = "matched_count";
inline constexpr std::string_view kSimilarPrefix = "similar:";
inline constexpr std::array<std::string_view, 4> kProvenanceColumns = {
    kSourceColumn, kSourceIdColumn, kVoteColumn, kMatchedCountColumn};

// One row per confident match (estimated label != 0), in match order. The
// label is the estimate, similarity features come from the unlabeled row and
// estimation-only features from the imputation. Ids are the source id with
// the "similar:" prefix; the source id is kept in its own column.
inline Dataset build_similar_dataset(const std::vector<MatchResult>& matches,
                                     const Dataset& unlabeled) {
  const FeatureSchema& schema = unlabeled.schema;
  Dataset out;
  out.schema = schema;
  out.provenance = "similar samples from " + unlabeled.provenance;
  for (auto c : kProvenanceColumns) out.extra_columns.emplace_back(c);

  const auto index = unlabeled.index_by_id();
  ViolationList errors;
  for (const MatchResult& m : matches) {
    auto it = index.find(m.unlabeled_id);
    if (it == index.end()) {
      errors.add("build_similar_dataset: match id '" + m.unlabeled_id +
                 "' not found in unlabeled dataset");
      continue;
    }
    if (m.estimated_label == 0) continue;
    if (!m.imputed ||
        m.imputed->size() != schema.estimation_features().size()) {
      errors.add("build_similar_dataset: confident match '" + m.unlabeled_id +
                 "' has no imputed features");
      continue;
    }
    const Sample& src = unlabeled.rows[it->second];
    Sample s;
    s.id = std::string(kSimilarPrefix) + src.id;
    s.timestamp = src.timestamp;
    s.label = m.estimated_label > 0 ? Label::kPositive : Label::kNegative;
    s.features.assign(schema.feature_count(), std::nullopt);
    for (std::size_t k : schema.similarity_features())
      s.features[k] = src.features[k];
    const auto& est = schema.estimation_features();
    for (std::size_t f = 0; f < est.size(); ++f)
      s.features[est[f]] = (*m.imputed)[f];
    s.extras = {"similar", src.id, m.vote ? format_double(*m.vote) : "",
                std::to_string(m.matched_count)};
    out.rows.push_back(std::move(s));
  }
  errors.throw_if_any();
  return out;
}

namespace detail {

inline std::size_t ensure_column(Dataset& d, std::string_view name) {
  if (auto i = d.extra_index(name)) return *i;
  d.extra_columns.emplace_back(name);
  for (auto& s : d.rows) s.extras.emplace_back();
  return d.extra_columns.size() - 1;
}

}  // namespace detail

// Real rows followed by similar rows, with a "source" column telling them
// apart. Similar ids that collide with an existing id get further prefixed.
inline Dataset merge_datasets(const Dataset& real, const Dataset& similar) {
  if (!(real.schema == similar.schema))
    throw Error("merge_datasets: schema mismatch between real and similar data");

  Dataset out = real;
  out.provenance = real.provenance + " + " + similar.provenance;
  const std::size_t source_col = detail::ensure_column(out, kSourceColumn);
  for (auto c : kProvenanceColumns) detail::ensure_column(out, c);
  for (const auto& c : similar.extra_columns) detail::ensure_column(out, c);
  for (auto& s : out.rows)
    if (s.extras[source_col].empty()) s.extras[source_col] = "real";

  std::unordered_set<std::string> ids;
  for (const auto& s : out.rows) ids.insert(s.id);
  for (const Sample& src : similar.rows) {
    Sample s = src;
    if (!s.id.starts_with(kSimilarPrefix)) s.id = std::string(kSimilarPrefix) + s.id;
    while (ids.count(s.id)) s.id = std::string(kSimilarPrefix) + s.id;
    ids.insert(s.id);
    s.extras.assign(out.extra_columns.size(), "");
    for (std::size_t i = 0; i < similar.extra_columns.size(); ++i)
      s.extras[*out.extra_index(similar.extra_columns[i])] = src.extras[i];
    s.extras[source_col] = "similar";
    out.rows.push_back(std::move(s));
  }
  return out;
}

// Rows whose "source" equals `source`, with the provenance columns removed.
inline Dataset filter_by_source(const Dataset& merged, std::string_view source) {
  auto source_col = merged.extra_index(kSourceColumn);
  if (!source_col) throw Error("filter_by_source: no source column");
  std::vector<std::size_t> keep;
  Dataset out = merged.empty_like();
  out.extra_columns.clear();
  for (std::size_t i = 0; i < merged.extra_columns.size(); ++i) {
    if (std::find(kProvenanceColumns.begin(), kProvenanceColumns.end(),
                  merged.extra_columns[i]) == kProvenanceColumns.end()) {
      keep.push_back(i);
      out.extra_columns.push_back(merged.extra_columns[i]);
    }
  }
  for (const Sample& s : merged.rows) {
    if (s.extras[*source_col] != source) continue;
    Sample r = s;
    r.extras.clear();
    for (std::size_t i : keep) r.extras.push_back(s.extras[i]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace gowermatch
