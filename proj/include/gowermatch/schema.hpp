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
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "gowermatch/error.hpp"

namespace gowermatch {

enum class Role { kSimilarity, kEstimationOnly, kLabel, kTimestamp, kId };

inline std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSimilarity: return "similarity";
    case Role::kEstimationOnly: return "estimation-only";
    case Role::kLabel: return "label";
    case Role::kTimestamp: return "timestamp";
    case Role::kId: return "id";
  }
  return "unknown";
}

inline std::optional<Role> parse_role(std::string_view text) {
  for (Role r : {Role::kSimilarity, Role::kEstimationOnly, Role::kLabel,
                 Role::kTimestamp, Role::kId}) {
    if (role_name(r) == text) return r;
  }
  return std::nullopt;
}

struct ColumnSpec {
  std::string name;
  Role role = Role::kSimilarity;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

// Declares the columns of a dataset and the role each one plays.
//
// Numeric feature columns ("value features") are the similarity features,
// compared by the kernel, and the estimation-only features, which are
// imputed for unlabeled rows. Sample feature vectors are indexed by the
// position of a column among the value features.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  static FeatureSchema create(std::vector<ColumnSpec> columns) {
    ViolationList errors;
    int labels = 0, timestamps = 0, ids = 0, similarity = 0;
    std::unordered_map<std::string, int> seen;
    for (const auto& c : columns) {
      if (c.name.empty()) errors.add("schema: empty column name");
      if (++seen[c.name] == 2)
        errors.add("schema: duplicate column name '" + c.name + "'");
      switch (c.role) {
        case Role::kLabel: ++labels; break;
        case Role::kTimestamp: ++timestamps; break;
        case Role::kId: ++ids; break;
        case Role::kSimilarity: ++similarity; break;
        case Role::kEstimationOnly: break;
      }
    }
    if (labels != 1) errors.add("schema: expected exactly one label column");
    if (timestamps != 1)
      errors.add("schema: expected exactly one timestamp column");
    if (ids != 1) errors.add("schema: expected exactly one id column");
    if (similarity < 1)
      errors.add("schema: expected at least one similarity feature");
    errors.throw_if_any();

    FeatureSchema s;
    s.columns_ = std::move(columns);
    for (const auto& c : s.columns_) {
      switch (c.role) {
        case Role::kLabel: s.label_ = c.name; break;
        case Role::kTimestamp: s.timestamp_ = c.name; break;
        case Role::kId: s.id_ = c.name; break;
        case Role::kSimilarity:
          s.similarity_.push_back(s.features_.size());
          s.features_.push_back(c.name);
          break;
        case Role::kEstimationOnly:
          s.estimation_.push_back(s.features_.size());
          s.features_.push_back(c.name);
          break;
      }
    }
    return s;
  }

  // Parses a JSON object mapping column name to role, in declaration order.
  static FeatureSchema from_json(std::string_view text) {
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("schema: invalid JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("columns")) j = j["columns"];
    if (!j.is_object())
      throw Error("schema: expected a JSON object of column -> role");
    std::vector<ColumnSpec> cols;
    ViolationList errors;
    for (const auto& [name, role] : j.items()) {
      std::optional<Role> r;
      if (role.is_string()) r = parse_role(role.get<std::string>());
      if (!r) {
        errors.add("schema: column '" + name + "' has unknown role " +
                   role.dump());
        continue;
      }
      cols.push_back({name, *r});
    }
    errors.throw_if_any();
    return create(std::move(cols));
  }

  std::string to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& c : columns_) j[c.name] = std::string(role_name(c.role));
    return j.dump(2) + "\n";
  }

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const std::string& label_column() const { return label_; }
  const std::string& timestamp_column() const { return timestamp_; }
  const std::string& id_column() const { return id_; }

  // Names of all value features in declaration order.
  const std::vector<std::string>& feature_names() const { return features_; }
  std::size_t feature_count() const { return features_.size(); }

  // Positions (into feature_names()) of similarity / estimation-only features.
  const std::vector<std::size_t>& similarity_features() const {
    return similarity_;
  }
  const std::vector<std::size_t>& estimation_features() const {
    return estimation_;
  }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    auto it = std::find(features_.begin(), features_.end(), name);
    if (it == features_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - features_.begin());
  }

  bool is_similarity(std::size_t feature) const {
    return std::find(similarity_.begin(), similarity_.end(), feature) !=
           similarity_.end();
  }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.columns_ == b.columns_;
  }

 private:
  std::vector<ColumnSpec> columns_;
  std::string label_, timestamp_, id_;
  std::vector<std::string> features_;
  std::vector<std::size_t> similarity_;
  std::vector<std::size_t> estimation_;
};

}  // namespace gowermatch
