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
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/model.hpp"

namespace gowermatch {

inline constexpr double kDefaultClassThreshold = 0.5;
// McNemar uses the exact binomial test below this many discordant pairs.
inline constexpr std::size_t kMcNemarExactBelow = 25;

// Area under the ROC curve from average ranks (Mann-Whitney U). Ties between
// a positive and a negative count one half. Labels are +1 / -1.
inline double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error("auc_roc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share the average (i + 1 + j) / 2.
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] > 0) {
        rank_sum += avg;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw Error("auc_roc: both classes must be present");
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

namespace detail {

struct Aligned {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::string> missing;
};

inline Aligned align(const ScoreFile& scores, const Dataset& data) {
  Aligned a;
  const auto by_id = scores.by_id();
  for (const auto& s : data.rows) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) {
      a.missing.push_back(s.id);
      continue;
    }
    if (!s.label) throw Error("row '" + s.id + "' has no label");
    a.scores.push_back(it->second);
    a.labels.push_back(to_int(*s.label));
  }
  return a;
}

inline std::string missing_message(const std::string& model,
                                   const std::string& testset,
                                   const std::vector<std::string>& missing) {
  std::string msg = "scores for model '" + model + "' miss " +
                    std::to_string(missing.size()) + " id(s) of test set '" +
                    testset + "': ";
  for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i)
    msg += (i ? ", " : "") + missing[i];
  if (missing.size() > 5) msg += ", ...";
  return msg;
}

}  // namespace detail

inline double auc_roc(const ScoreFile& scores, const Dataset& labels) {
  auto a = detail::align(scores, labels);
  if (!a.missing.empty())
    throw Error(detail::missing_message(scores.model_name, labels.provenance,
                                        a.missing));
  return auc_roc(a.scores, a.labels);
}

enum class McNemarVariant { kExactBinomial, kChiSquareCorrected };

inline std::string_view variant_name(McNemarVariant v) {
  return v == McNemarVariant::kExactBinomial ? "exact_binomial"
                                             : "chi_square_corrected";
}

struct McNemarResult {
  // b: A correct and B wrong; c: A wrong and B correct.
  std::size_t b = 0;
  std::size_t c = 0;
  // Continuity-corrected chi-square statistic (|b - c| - 1)^2 / (b + c),
  // reported for both variants; 0 when b + c = 0.
  double statistic = 0.0;
  double p_value = 1.0;
  McNemarVariant variant = McNemarVariant::kExactBinomial;
};

// Two-sided exact binomial p-value for b discordant pairs out of b + c at
// probability one half.
inline double mcnemar_exact_p(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  if (n == 0) return 1.0;
  const std::size_t k = std::max(b, c);
  double tail = 0.0;
  if (n <= 62) {
    // Exact: integer binomial coefficients, one final scaling by 2^-n.
    std::uint64_t coef = 1;  // C(n, 0)
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i <= n; ++i) {
      if (i >= k) sum += coef;
      if (i < n) coef = coef / (i + 1) * (n - i) + coef % (i + 1) * (n - i) / (i + 1);
    }
    tail = std::ldexp(static_cast<double>(sum), -static_cast<int>(n));
  } else {
    for (std::size_t i = k; i <= n; ++i)
      tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                       std::lgamma(static_cast<double>(n - i) + 1.0) -
                       static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

inline McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const std::size_t n = b + c;
  if (n > 0) {
    const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c));
    r.statistic = (diff - 1.0) * (diff - 1.0) / static_cast<double>(n);
  }
  if (n < kMcNemarExactBelow) {
    r.variant = McNemarVariant::kExactBinomial;
    r.p_value = mcnemar_exact_p(b, c);
  } else {
    r.variant = McNemarVariant::kChiSquareCorrected;
    // Survival function of chi-square with one degree of freedom.
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  }
  return r;
}

// Scores at or above the threshold predict +1.
inline int predicted_class(double score, double class_threshold) {
  return score >= class_threshold ? 1 : -1;
}

inline McNemarResult mcnemar_test(const ScoreFile& a, const ScoreFile& b,
                                  const Dataset& labels,
                                  double class_threshold = kDefaultClassThreshold) {
  const auto sa = a.by_id();
  const auto sb = b.by_id();
  ViolationList errors;
  std::size_t only_a = 0, only_b = 0;
  for (const auto& s : labels.rows) {
    auto ia = sa.find(s.id);
    auto ib = sb.find(s.id);
    if (ia == sa.end() || ib == sb.end() || !s.label) {
      errors.add("mcnemar_test: id mismatch for '" + s.id + "'");
      continue;
    }
    const int y = to_int(*s.label);
    const bool ok_a = predicted_class(ia->second, class_threshold) == y;
    const bool ok_b = predicted_class(ib->second, class_threshold) == y;
    if (ok_a && !ok_b) ++only_a;
    if (!ok_a && ok_b) ++only_b;
  }
  errors.throw_if_any();
  return mcnemar_from_counts(only_a, only_b);
}

// ---------------------------------------------------------------------------
// Report table

struct ModelScores {
  std::string name;
  // Trained with similar samples added; shown with a star.
  bool augmented = false;
  ScoreFile scores;

  std::string display_name() const {
    return augmented && !name.ends_with('*') ? name + "*" : name;
  }
};

struct NamedDataset {
  std::string name;
  Dataset data;
};

struct Comparison {
  std::string model_a;
  std::string model_b;
  std::string testset;
  McNemarResult result;
};

struct AugmentationDelta {
  std::string model;
  std::string testset;
  std::optional<double> plain;
  std::optional<double> augmented;
  std::optional<double> delta;
};

struct EvalReport {
  std::vector<std::string> models;  // display names, input order
  std::vector<bool> augmented;
  std::vector<std::string> testsets;
  std::vector<std::size_t> testset_rows;
  std::vector<std::size_t> testset_positives;
  // auc[m][t]; nullopt when the test set holds a single class.
  std::vector<std::vector<std::optional<double>>> auc;
  std::vector<Comparison> comparisons;
  std::vector<AugmentationDelta> deltas;
  double class_threshold = kDefaultClassThreshold;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<std::string> notes;

  std::string to_json() const;
  std::string to_text() const;
};

inline EvalReport evaluate_table(std::span<const ModelScores> models,
                                 std::span<const NamedDataset> testsets,
                                 double class_threshold = kDefaultClassThreshold) {
  ViolationList gaps;
  std::vector<std::vector<detail::Aligned>> aligned(models.size());
  for (std::size_t m = 0; m < models.size(); ++m)
    for (const auto& t : testsets) {
      aligned[m].push_back(detail::align(models[m].scores, t.data));
      if (!aligned[m].back().missing.empty())
        gaps.add(detail::missing_message(models[m].display_name(), t.name,
                                         aligned[m].back().missing));
    }
  gaps.throw_if_any();

  EvalReport r;
  r.class_threshold = class_threshold;
  for (const auto& m : models) {
    r.models.push_back(m.display_name());
    r.augmented.push_back(m.augmented);
  }
  for (const auto& t : testsets) {
    r.testsets.push_back(t.name);
    r.testset_rows.push_back(t.data.size());
    std::size_t pos = 0;
    for (const auto& s : t.data.rows) pos += s.label && to_int(*s.label) > 0;
    r.testset_positives.push_back(pos);
  }
  r.auc.assign(models.size(), std::vector<std::optional<double>>(testsets.size()));
  for (std::size_t t = 0; t < testsets.size(); ++t) {
    const std::size_t pos = r.testset_positives[t];
    const bool both = pos > 0 && pos < r.testset_rows[t];
    if (!both)
      r.notes.push_back("AUC undefined on test set '" + testsets[t].name +
                        "': it does not contain both classes");
    for (std::size_t m = 0; m < models.size(); ++m)
      if (both) r.auc[m][t] = auc_roc(aligned[m][t].scores, aligned[m][t].labels);
  }
  for (std::size_t t = 0; t < testsets.size(); ++t)
    for (std::size_t a = 0; a < models.size(); ++a)
      for (std::size_t b = a + 1; b < models.size(); ++b)
        r.comparisons.push_back(
            {r.models[a], r.models[b], testsets[t].name,
             mcnemar_test(models[a].scores, models[b].scores, testsets[t].data,
                          class_threshold)});
  for (std::size_t a = 0; a < models.size(); ++a) {
    if (!models[a].augmented) continue;
    for (std::size_t p = 0; p < models.size(); ++p) {
      if (models[p].augmented || models[p].name != models[a].name) continue;
      for (std::size_t t = 0; t < testsets.size(); ++t) {
        AugmentationDelta d{models[p].name, testsets[t].name, r.auc[p][t],
                            r.auc[a][t], std::nullopt};
        if (d.plain && d.augmented) d.delta = *d.augmented - *d.plain;
        r.deltas.push_back(std::move(d));
      }
    }
  }
  r.notes.push_back("McNemar p-values are raw, without multiplicity adjustment");
  r.notes.push_back("Predictions are binarized as +1 when score >= " +
                    format_double(class_threshold));
  return r;
}

inline std::string EvalReport::to_json() const {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) -> ordered_json {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  ordered_json j;
  j["title"] = "Performance of algorithms in AUC ROC";
  j["models"] = ordered_json::array();
  for (std::size_t m = 0; m < models.size(); ++m)
    j["models"].push_back({{"name", models[m]}, {"augmented", bool(augmented[m])}});
  j["testsets"] = ordered_json::array();
  for (std::size_t t = 0; t < testsets.size(); ++t)
    j["testsets"].push_back({{"name", testsets[t]},
                             {"rows", testset_rows[t]},
                             {"positives", testset_positives[t]}});
  j["cells"] = ordered_json::array();
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t t = 0; t < testsets.size(); ++t)
      j["cells"].push_back(
          {{"model", models[m]}, {"testset", testsets[t]}, {"auc", opt(auc[m][t])}});
  j["comparisons"] = ordered_json::array();
  for (const auto& c : comparisons)
    j["comparisons"].push_back({{"model_a", c.model_a},
                                {"model_b", c.model_b},
                                {"testset", c.testset},
                                {"b", c.result.b},
                                {"c", c.result.c},
                                {"statistic", c.result.statistic},
                                {"p_value", c.result.p_value},
                                {"variant", std::string(variant_name(c.result.variant))}});
  j["augmentation_deltas"] = ordered_json::array();
  for (const auto& d : deltas)
    j["augmentation_deltas"].push_back({{"model", d.model},
                                        {"testset", d.testset},
                                        {"plain", opt(d.plain)},
                                        {"augmented", opt(d.augmented)},
                                        {"delta", opt(d.delta)}});
  ordered_json meta = metadata;
  meta["class_threshold"] = class_threshold;
  meta["mcnemar_exact_below"] = kMcNemarExactBelow;
  j["metadata"] = meta;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

inline std::string EvalReport::to_text() const {
  auto fmt = [](const std::optional<double>& v, int prec = 2) {
    if (!v) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << *v;
    return s.str();
  };
  std::vector<std::string> header{"Algorithm"};
  for (const auto& t : testsets) header.push_back("Test data (" + t + ")");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::vector<std::string> row{models[m]};
    for (std::size_t t = 0; t < testsets.size(); ++t) row.push_back(fmt(auc[m][t]));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << cells[i];
      if (i + 1 < cells.size())
        out << std::string(width[i] - cells[i].size() + 2, ' ');
    }
    out << "\n";
  };
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  const std::string rule(total > 2 ? total - 2 : total, '-');
  out << "Performance of algorithms in AUC ROC. "
         "Classifiers trained with similar samples marked with star.\n";
  out << rule << "\n";
  line(header);
  out << rule << "\n";
  for (const auto& r : rows) line(r);
  out << rule << "\n";
  out << "Test set sizes:";
  for (std::size_t t = 0; t < testsets.size(); ++t)
    out << " " << testsets[t] << "=" << testset_rows[t] << " ("
        << testset_positives[t] << " positive)";
  out << "\n";

  if (!deltas.empty()) {
    out << "\nAugmented minus plain AUC:\n";
    for (const auto& d : deltas)
      out << "  " << d.model << " on " << d.testset << ": "
          << (d.delta ? (*d.delta >= 0 ? "+" : "") + fmt(d.delta, 4) : "n/a")
          << "\n";
  }
  if (!comparisons.empty()) {
    out << "\nMcNemar tests (threshold " << format_double(class_threshold) << "):\n";
    for (const auto& c : comparisons)
      out << "  [" << c.testset << "] " << c.model_a << " vs " << c.model_b
          << ": b=" << c.result.b << " c=" << c.result.c
          << " stat=" << fmt(c.result.statistic, 4)
          << " p=" << fmt(c.result.p_value, 4) << " ("
          << variant_name(c.result.variant) << ")\n";
  }
  if (!notes.empty()) {
    out << "\nNotes:\n";
    for (const auto& n : notes) out << "  - " << n << "\n";
  }
  return out.str();
}

}  // namespace gowermatch
