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
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/schema.hpp"

namespace gowermatch {

struct FeatureRange {
  std::string name;
  // Position of the feature in the schema's value-feature vector.
  std::size_t feature = 0;
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  double range = 0.0;
};

// Frozen per-feature ranges r_k for the similarity features, in schema order.
// Built once per run and shared read-only by every similarity evaluation.
class RangeTable {
 public:
  RangeTable() = default;
  RangeTable(std::vector<FeatureRange> entries, std::string source)
      : entries_(std::move(entries)), source_(std::move(source)) {}

  const std::vector<FeatureRange>& entries() const { return entries_; }
  const std::string& source() const { return source_; }

  const FeatureRange* find(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  const FeatureRange* find_feature(std::size_t feature) const {
    for (const auto& e : entries_)
      if (e.feature == feature) return &e;
    return nullptr;
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["source"] = source_;
    j["ranges"] = nlohmann::ordered_json::object();
    j["bounds"] = nlohmann::ordered_json::object();
    for (const auto& e : entries_) {
      j["ranges"][e.name] = e.range;
      if (std::isfinite(e.min) && std::isfinite(e.max))
        j["bounds"][e.name] = {e.min, e.max};
    }
    return j.dump(2) + "\n";
  }

  // Reads a table written by to_json(). "bounds" is optional; without it the
  // observed min/max are unknown and perturbations are not clamped.
  static RangeTable from_json(std::string_view text,
                              const FeatureSchema& schema) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("ranges: invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("ranges") || !j["ranges"].is_object())
      throw Error("ranges: expected an object with a \"ranges\" member");
    ViolationList errors;
    std::vector<FeatureRange> entries;
    for (std::size_t k : schema.similarity_features()) {
      const std::string& name = schema.feature_names()[k];
      if (!j["ranges"].contains(name) || !j["ranges"][name].is_number()) {
        errors.add("ranges: no numeric entry for similarity feature '" + name +
                   "'");
        continue;
      }
      FeatureRange e;
      e.name = name;
      e.feature = k;
      e.range = j["ranges"][name].get<double>();
      if (!(e.range >= 0.0) || !std::isfinite(e.range))
        errors.add("ranges: range for '" + name + "' must be >= 0");
      if (j.contains("bounds") && j["bounds"].contains(name)) {
        const auto& b = j["bounds"][name];
        if (b.is_array() && b.size() == 2 && b[0].is_number() &&
            b[1].is_number()) {
          e.min = b[0].get<double>();
          e.max = b[1].get<double>();
        } else {
          errors.add("ranges: bounds for '" + name + "' must be [min, max]");
        }
      }
      entries.push_back(std::move(e));
    }
    errors.throw_if_any();
    return RangeTable(std::move(entries), j.value("source", std::string{}));
  }

 private:
  std::vector<FeatureRange> entries_;
  std::string source_;
};

// r_k = max - min of each similarity feature, pooled over every non-missing
// value in all sources.
inline RangeTable compute_ranges(
    std::span<const std::reference_wrapper<const Dataset>> sources,
    const FeatureSchema& schema) {
  std::vector<FeatureRange> entries;
  ViolationList errors;
  std::string provenance;
  for (const Dataset& d : sources) {
    if (!provenance.empty()) provenance += "; ";
    provenance += d.provenance.empty() ? "<unnamed>" : d.provenance;
    provenance += " (" + std::to_string(d.size()) + " rows)";
  }
  for (std::size_t k : schema.similarity_features()) {
    const std::string& name = schema.feature_names()[k];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Dataset& d : sources) {
      auto idx = d.schema.feature_index(name);
      if (!idx) continue;
      for (const Sample& s : d.rows) {
        if (const auto& v = s.features[*idx]) {
          lo = std::min(lo, *v);
          hi = std::max(hi, *v);
        }
      }
    }
    if (lo > hi) {
      errors.add("compute_ranges: feature '" + name +
                 "' is missing in every source row");
      continue;
    }
    entries.push_back({name, k, lo, hi, std::abs(hi - lo)});
  }
  errors.throw_if_any();
  return RangeTable(std::move(entries), std::move(provenance));
}

inline RangeTable compute_ranges(const Dataset& source,
                                 const FeatureSchema& schema) {
  std::reference_wrapper<const Dataset> one[] = {std::cref(source)};
  return compute_ranges(one, schema);
}

// Similarity of one feature: 1 - clamp(|a - b| / r, 0, 1). A zero range means
// the feature was constant in the reference data; equality scores 1.
inline double feature_similarity(double a, double b, double range) {
  if (range == 0.0) return a == b ? 1.0 : 0.0;
  return 1.0 - std::min(std::abs(a - b) / range, 1.0);
}

// Gower coefficient over the similarity features present in both samples.
// Returns nullopt when no feature is co-present.
inline std::optional<double> try_gower_similarity(
    std::span<const FeatureValue> a, std::span<const FeatureValue> b,
    const RangeTable& ranges) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const FeatureRange& e : ranges.entries()) {
    const FeatureValue& va = a[e.feature];
    const FeatureValue& vb = b[e.feature];
    if (!va || !vb) continue;
    sum += feature_similarity(*va, *vb, e.range);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

inline double gower_similarity(const Sample& a, const Sample& b,
                               const RangeTable& ranges) {
  auto s = try_gower_similarity(a.features, b.features, ranges);
  if (!s)
    throw Error("gower_similarity: samples '" + a.id + "' and '" + b.id +
                "' share no present similarity feature");
  return *s;
}

}  // namespace gowermatch
