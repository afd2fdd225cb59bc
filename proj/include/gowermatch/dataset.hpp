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
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gowermatch/error.hpp"
#include "gowermatch/schema.hpp"
#include "gowermatch/text_io.hpp"

namespace gowermatch {

enum class Label : int { kNegative = -1, kPositive = 1 };

inline int to_int(Label y) { return static_cast<int>(y); }
inline Label negate(Label y) {
  return y == Label::kPositive ? Label::kNegative : Label::kPositive;
}

using FeatureValue = std::optional<double>;

struct Sample {
  std::string id;
  Timestamp timestamp;
  // Indexed like FeatureSchema::feature_names(); nullopt marks a missing cell.
  std::vector<FeatureValue> features;
  std::optional<Label> label;
  // Values of Dataset::extra_columns, as text.
  std::vector<std::string> extras;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Sample> rows;
  std::string provenance;
  // Columns carried through unchanged that are not part of the schema,
  // e.g. the provenance columns added by augmentation.
  std::vector<std::string> extra_columns;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  std::optional<std::size_t> extra_index(std::string_view name) const {
    auto it = std::find(extra_columns.begin(), extra_columns.end(), name);
    if (it == extra_columns.end()) return std::nullopt;
    return static_cast<std::size_t>(it - extra_columns.begin());
  }

  std::unordered_map<std::string, std::size_t> index_by_id() const {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) index.emplace(rows[i].id, i);
    return index;
  }

  // A copy with the same schema and columns but no rows.
  Dataset empty_like() const {
    Dataset d;
    d.schema = schema;
    d.provenance = provenance;
    d.extra_columns = extra_columns;
    return d;
  }

  // Checks the row-level invariants; throws ValidationError listing them all.
  void validate() const {
    ViolationList errors;
    std::unordered_set<std::string> ids;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Sample& s = rows[r];
      const std::string where = "row " + std::to_string(r + 1);
      if (s.id.empty()) errors.add(where + ": empty id");
      if (!ids.insert(s.id).second)
        errors.add(where + ": duplicate id '" + s.id + "'");
      if (s.features.size() != schema.feature_count())
        errors.add(where + ": feature count does not match schema");
      else if (s.label)
        for (std::size_t k : schema.similarity_features())
          if (!s.features[k])
            errors.add(where + ": labeled row is missing similarity feature '" +
                       schema.feature_names()[k] + "'");
      if (s.extras.size() != extra_columns.size())
        errors.add(where + ": extra column count mismatch");
    }
    errors.throw_if_any();
  }
};

// Parses a delimited-text table against `schema`.
//
// The id, timestamp and similarity columns are required. The label and
// estimation-only columns may be absent (unlabeled data); their cells are
// then missing. Columns not named by the schema are kept as extra columns.
inline Dataset parse_dataset(const CsvTable& table, const FeatureSchema& schema,
                             std::string provenance = {}) {
  ViolationList errors;
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (!col.emplace(table.header[i], i).second)
      errors.add("header: duplicate column '" + table.header[i] + "'");
  }
  auto require = [&](const std::string& name) {
    if (!col.count(name)) errors.add("header: missing column '" + name + "'");
  };
  require(schema.id_column());
  require(schema.timestamp_column());
  for (std::size_t k : schema.similarity_features())
    require(schema.feature_names()[k]);
  errors.throw_if_any();

  auto lookup = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };
  const std::size_t id_col = *lookup(schema.id_column());
  const std::size_t ts_col = *lookup(schema.timestamp_column());
  const auto label_col = lookup(schema.label_column());
  std::vector<std::optional<std::size_t>> feature_cols;
  for (const auto& name : schema.feature_names())
    feature_cols.push_back(lookup(name));

  Dataset data;
  data.schema = schema;
  data.provenance = std::move(provenance);
  std::vector<std::size_t> extra_cols;
  {
    std::unordered_set<std::string> known{schema.id_column(),
                                          schema.timestamp_column(),
                                          schema.label_column()};
    for (const auto& n : schema.feature_names()) known.insert(n);
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      if (!known.count(table.header[i])) {
        extra_cols.push_back(i);
        data.extra_columns.push_back(table.header[i]);
      }
    }
  }

  std::unordered_set<std::string> ids;
  data.rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const std::string where = "row " + std::to_string(r + 1) + " (line " +
                              std::to_string(table.line_numbers[r]) + ")";
    if (cells.size() != table.header.size()) {
      errors.add(where + ": expected " + std::to_string(table.header.size()) +
                 " columns, found " + std::to_string(cells.size()));
      continue;
    }
    Sample s;
    s.id = cells[id_col];
    if (s.id.empty()) errors.add(where + ": empty id");
    else if (!ids.insert(s.id).second)
      errors.add(where + ": duplicate id '" + s.id + "'");

    if (auto ts = parse_timestamp(cells[ts_col])) {
      s.timestamp = std::move(*ts);
    } else {
      errors.add(where + ": invalid ISO-8601 timestamp '" + cells[ts_col] +
                 "'");
    }

    if (label_col && !cells[*label_col].empty()) {
      auto v = parse_integer(cells[*label_col]);
      if (v && (*v == 1 || *v == -1)) {
        s.label = *v == 1 ? Label::kPositive : Label::kNegative;
      } else {
        errors.add(where + ": label must be -1 or +1, found '" +
                   cells[*label_col] + "'");
      }
    }

    s.features.resize(schema.feature_count());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      if (!feature_cols[k]) continue;
      const std::string& cell = cells[*feature_cols[k]];
      if (cell.empty()) continue;
      if (auto v = parse_double(cell)) {
        s.features[k] = *v;
      } else {
        errors.add(where + ": non-numeric value '" + cell + "' in column '" +
                   schema.feature_names()[k] + "'");
      }
    }
    if (s.label) {
      for (std::size_t k : schema.similarity_features()) {
        if (cells[*feature_cols[k]].empty())
          errors.add(where + ": labeled row is missing similarity feature '" +
                     schema.feature_names()[k] + "'");
      }
    }
    for (std::size_t e : extra_cols) s.extras.push_back(cells[e]);
    data.rows.push_back(std::move(s));
  }
  errors.throw_if_any();
  return data;
}

inline Dataset load_dataset(const std::filesystem::path& path,
                            const FeatureSchema& schema) {
  CsvTable table = read_csv_file(path);
  try {
    return parse_dataset(table, schema, path.string());
  } catch (const ValidationError& e) {
    std::vector<std::string> v;
    for (const auto& m : e.violations()) v.push_back(path.string() + ": " + m);
    throw ValidationError(std::move(v));
  }
}

// Serializes in schema column order followed by the extra columns. Missing
// cells and absent labels are written as empty fields.
inline std::string format_dataset(const Dataset& data) {
  const FeatureSchema& schema = data.schema;
  std::vector<std::string> header;
  for (const auto& c : schema.columns()) header.push_back(c.name);
  for (const auto& e : data.extra_columns) header.push_back(e);
  std::string out = join_csv_record(header) + "\n";
  std::vector<std::string> fields;
  for (const Sample& s : data.rows) {
    fields.clear();
    std::size_t feature = 0;
    for (const auto& c : schema.columns()) {
      switch (c.role) {
        case Role::kId: fields.push_back(s.id); break;
        case Role::kTimestamp: fields.push_back(s.timestamp.text); break;
        case Role::kLabel:
          fields.push_back(s.label ? (to_int(*s.label) > 0 ? "1" : "-1") : "");
          break;
        case Role::kSimilarity:
        case Role::kEstimationOnly: {
          const FeatureValue& v = s.features.at(feature++);
          fields.push_back(v ? format_double(*v) : "");
          break;
        }
      }
    }
    for (const auto& e : s.extras) fields.push_back(e);
    out += join_csv_record(fields) + "\n";
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path,
                          const Dataset& data) {
  write_file_atomic(path, format_dataset(data));
}

// Number of rows that must land in the test partition.
inline std::size_t holdout_target(std::size_t n, double test_fraction) {
  // Guard against products such as 0.2 * 100 landing a hair above an integer.
  double raw = test_fraction * static_cast<double>(n);
  double target = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  return static_cast<std::size_t>(std::max(0.0, target));
}

struct Split {
  Dataset train;
  Dataset test;
};

// Look-ahead-safe split at a holdout date H: the latest timestamp for which
// at least ceil(test_fraction * N) rows are at or after H. Rows tied at H all
// go to test. Row order is preserved within each partition.
inline Split time_holdout_split(const Dataset& data, double test_fraction) {
  if (data.empty()) throw Error("time_holdout_split: empty dataset");
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0))
    throw Error("time_holdout_split: test_fraction must be in [0, 1]");
  const std::size_t target = holdout_target(data.size(), test_fraction);

  Split split{data.empty_like(), data.empty_like()};
  split.train.provenance = data.provenance + " | train split";
  split.test.provenance = data.provenance + " | test split";
  if (target == 0) {
    split.train.rows = data.rows;
    return split;
  }

  std::vector<std::chrono::sys_seconds> times;
  times.reserve(data.size());
  for (const auto& s : data.rows) times.push_back(s.timestamp.instant);
  std::sort(times.begin(), times.end(), std::greater<>());
  // times is descending; the target-th latest timestamp is the holdout date.
  const auto holdout = times[std::min(target, times.size()) - 1];

  for (const auto& s : data.rows) {
    (s.timestamp.instant < holdout ? split.train : split.test)
        .rows.push_back(s);
  }
  return split;
}

}  // namespace gowermatch
