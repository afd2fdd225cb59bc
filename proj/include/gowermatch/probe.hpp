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
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/eval.hpp"
#include "gowermatch/kernel.hpp"
#include "gowermatch/model.hpp"
#include "gowermatch/parallel.hpp"
#include "gowermatch/text_io.hpp"

namespace gowermatch {

// Anything that maps a sample to a probability.
template <class F>
concept SampleScorer = requires(const F& f, const Sample& s) {
  { f(s) } -> std::convertible_to<double>;
};

// n evenly spaced values from lo to hi inclusive; n == 1 yields {lo}.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = i + 1 == n ? hi
                      : lo + (hi - lo) * static_cast<double>(i) /
                                 static_cast<double>(n - 1);
  return v;
}

struct ProbeGrid {
  std::string sample_id;
  std::string feature_x;
  std::string feature_y;
  std::vector<double> x_values;
  std::vector<double> y_values;
  // Row-major |x| by |y|: at(i, j) is the score at (x_values[i], y_values[j]).
  std::vector<double> probabilities;

  double at(std::size_t i, std::size_t j) const {
    return probabilities[i * y_values.size() + j];
  }
};

// Scores the model over a two-feature grid with every other feature held at
// the base sample's values.
template <SampleScorer Scorer>
ProbeGrid probability_grid(const Scorer& scorer, const Sample& base,
                           const FeatureSchema& schema, const std::string& fx,
                           const std::string& fy, std::vector<double> x_values,
                           std::vector<double> y_values, std::size_t workers = 1) {
  auto ix = schema.feature_index(fx);
  auto iy = schema.feature_index(fy);
  if (!ix) throw Error("probability_grid: unknown feature '" + fx + "'");
  if (!iy) throw Error("probability_grid: unknown feature '" + fy + "'");
  if (*ix == *iy) throw Error("probability_grid: features must differ");
  if (x_values.empty() || y_values.empty())
    throw Error("probability_grid: empty axis");
  if (!std::is_sorted(x_values.begin(), x_values.end()) ||
      !std::is_sorted(y_values.begin(), y_values.end()))
    throw Error("probability_grid: axis values must be ascending");

  ProbeGrid g;
  g.sample_id = base.id;
  g.feature_x = fx;
  g.feature_y = fy;
  g.x_values = std::move(x_values);
  g.y_values = std::move(y_values);
  const std::size_t ny = g.y_values.size();
  g.probabilities.assign(g.x_values.size() * ny, 0.0);
  parallel_for(g.x_values.size(), workers, [&](std::size_t i) {
    Sample s = base;
    s.features[*ix] = g.x_values[i];
    for (std::size_t j = 0; j < ny; ++j) {
      s.features[*iy] = g.y_values[j];
      g.probabilities[i * ny + j] = scorer(s);
    }
  });
  return g;
}

inline ProbeGrid probability_grid(const LinearModel& model, const Sample& base,
                                  const FeatureSchema& schema,
                                  const std::string& fx, const std::string& fy,
                                  std::vector<double> x_values,
                                  std::vector<double> y_values,
                                  std::size_t workers = 1) {
  ViolationList errors;
  for (const auto* f : {&fx, &fy})
    if (std::find(model.features.begin(), model.features.end(), *f) ==
        model.features.end())
      errors.add("probability_grid: feature '" + *f + "' is not in the model");
  for (const auto& f : model.features) {
    auto idx = schema.feature_index(f);
    if (idx && !base.features[*idx])
      errors.add("probability_grid: base sample lacks model feature '" + f + "'");
  }
  errors.throw_if_any();
  return probability_grid(LinearScorer(model, schema), base, schema, fx, fy,
                          std::move(x_values), std::move(y_values), workers);
}

inline std::string format_grid(const ProbeGrid& g) {
  std::string out =
      join_csv_record({"sample_id", g.feature_x, g.feature_y, "score"}) + "\n";
  for (std::size_t i = 0; i < g.x_values.size(); ++i)
    for (std::size_t j = 0; j < g.y_values.size(); ++j)
      out += join_csv_record({g.sample_id, format_double(g.x_values[i]),
                              format_double(g.y_values[j]),
                              format_double(g.at(i, j))}) +
             "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Similarity shells

struct ShellSample {
  Sample sample;
  double similarity = 1.0;
  // Filled in by score_shell.
  double score = std::numeric_limits<double>::quiet_NaN();
  bool crossed = false;
};

struct ShellSpec {
  std::vector<std::string> vary;
  double d = 0.9;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  // Redraw limit per sample before giving up.
  std::size_t max_attempts = 1000;
};

// Perturbs the `vary` features of `base` so that the Gower similarity to the
// base stays at or above d.
//
// Each draw splits the divergence budget D * (1 - d), D being the number of
// similarity features present in the base, across the varied features with
// uniform random simplex weights and moves each feature by +/- share * r_k,
// clamped to the observed bounds. Every draw is re-checked against the
// kernel and redrawn if rounding left it below d. Sample i uses its own
// random stream, so the output does not depend on the worker count.
inline std::vector<ShellSample> similarity_shell(const Sample& base,
                                                 const RangeTable& ranges,
                                                 const ShellSpec& spec,
                                                 std::size_t workers = 1) {
  ViolationList errors;
  if (spec.vary.empty()) errors.add("similarity_shell: empty vary set");
  if (!(spec.d >= 0.0 && spec.d <= 1.0))
    errors.add("similarity_shell: d must be in [0, 1]");
  std::vector<const FeatureRange*> varied;
  for (const auto& name : spec.vary) {
    const FeatureRange* e = ranges.find(name);
    if (!e) {
      errors.add("similarity_shell: '" + name + "' is not a similarity feature");
      continue;
    }
    if (!base.features.at(e->feature))
      errors.add("similarity_shell: base sample lacks '" + name + "'");
    if (std::find(varied.begin(), varied.end(), e) != varied.end())
      errors.add("similarity_shell: '" + name + "' listed twice");
    varied.push_back(e);
  }
  errors.throw_if_any();

  std::size_t present = 0;
  for (const auto& e : ranges.entries()) present += base.features[e.feature].has_value();
  const double budget = static_cast<double>(present) * (1.0 - spec.d);

  std::vector<ShellSample> shell(spec.count);
  parallel_for(spec.count, workers, [&](std::size_t i) {
    Rng rng(spec.seed, i);
    std::vector<double> weights(varied.size());
    for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
      double total = 0.0;
      for (auto& w : weights) {
        w = -std::log(rng.uniform_open_zero());
        total += w;
      }
      Sample s = base;
      for (std::size_t v = 0; v < varied.size(); ++v) {
        const FeatureRange& e = *varied[v];
        const double share = std::min(1.0, budget * weights[v] / total);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double value = *base.features[e.feature] + sign * share * e.range;
        if (std::isfinite(e.min) && std::isfinite(e.max))
          value = std::clamp(value, e.min, e.max);
        s.features[e.feature] = value;
      }
      const double sim = gower_similarity(base, s, ranges);
      if (sim >= spec.d) {
        s.id = base.id + "#" + std::to_string(i);
        shell[i].sample = std::move(s);
        shell[i].similarity = sim;
        return;
      }
    }
    throw Error("similarity_shell: no admissible draw for sample " +
                std::to_string(i) + " after " +
                std::to_string(spec.max_attempts) + " attempts");
  });
  return shell;
}

template <SampleScorer Scorer>
void score_shell(std::vector<ShellSample>& shell, const Scorer& scorer,
                 double base_score, double class_threshold = kDefaultClassThreshold,
                 std::size_t workers = 1) {
  const int base_class = predicted_class(base_score, class_threshold);
  parallel_for(shell.size(), workers, [&](std::size_t i) {
    shell[i].score = scorer(shell[i].sample);
    shell[i].crossed = predicted_class(shell[i].score, class_threshold) != base_class;
  });
}

// Applies scores computed elsewhere, keyed by shell sample id.
inline void score_shell(std::vector<ShellSample>& shell, const ScoreFile& scores,
                        double base_score,
                        double class_threshold = kDefaultClassThreshold) {
  const auto by_id = scores.by_id();
  const int base_class = predicted_class(base_score, class_threshold);
  ViolationList errors;
  for (auto& s : shell) {
    auto it = by_id.find(s.sample.id);
    if (it == by_id.end()) {
      errors.add("score_shell: no score for '" + s.sample.id + "'");
      continue;
    }
    s.score = it->second;
    s.crossed = predicted_class(s.score, class_threshold) != base_class;
  }
  errors.throw_if_any();
}

inline std::string format_shell(const std::vector<ShellSample>& shell,
                                const FeatureSchema& schema) {
  std::vector<std::string> header{"id"};
  for (const auto& f : schema.feature_names()) header.push_back(f);
  for (const char* c : {"similarity", "score", "crossed"}) header.emplace_back(c);
  std::string out = join_csv_record(header) + "\n";
  for (const auto& s : shell) {
    std::vector<std::string> f{s.sample.id};
    for (const auto& v : s.sample.features) f.push_back(v ? format_double(*v) : "");
    f.push_back(format_double(s.similarity));
    f.push_back(std::isnan(s.score) ? "" : format_double(s.score));
    f.push_back(s.crossed ? "1" : "0");
    out += join_csv_record(f) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recourse

struct FeatureDelta {
  std::string feature;
  double from = 0.0;
  double to = 0.0;
  double delta = 0.0;
};

struct RecourseReport {
  std::string base_id;
  double base_score = 0.0;
  int base_class = 0;
  double class_threshold = kDefaultClassThreshold;
  std::size_t shell_size = 0;
  std::size_t crossing_count = 0;
  double min_similarity = 1.0;
  bool found = false;
  // The crossing sample most similar to the base (ties: smallest id).
  std::string best_id;
  double best_similarity = 0.0;
  double best_score = 0.0;
  std::vector<FeatureDelta> deltas;
  // Largest |score - base_score| / (1 - similarity) over the shell.
  std::optional<double> max_sensitivity;
  std::string message;

  double cost() const { return 1.0 - best_similarity; }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["base_id"] = base_id;
    j["base_score"] = base_score;
    j["base_class"] = base_class;
    j["class_threshold"] = class_threshold;
    j["shell_size"] = shell_size;
    j["crossing_count"] = crossing_count;
    j["recourse_found"] = found;
    j["message"] = message;
    if (found) {
      nlohmann::ordered_json best;
      best["id"] = best_id;
      best["similarity"] = best_similarity;
      best["cost"] = cost();
      best["score"] = best_score;
      best["actions"] = nlohmann::ordered_json::array();
      for (const auto& d : deltas)
        best["actions"].push_back(
            {{"feature", d.feature}, {"from", d.from}, {"to", d.to}, {"delta", d.delta}});
      j["best"] = best;
    }
    j["max_score_change_per_unit_dissimilarity"] =
        max_sensitivity ? nlohmann::ordered_json(*max_sensitivity)
                        : nlohmann::ordered_json(nullptr);
    return j.dump(2) + "\n";
  }
};

// Reports whether any scored shell sample lands in a different class than the
// base, and if so the most similar such sample with its feature changes.
inline RecourseReport recourse_from_scored_shell(
    const Sample& base, double base_score, const std::vector<ShellSample>& shell,
    const FeatureSchema& schema, double class_threshold = kDefaultClassThreshold) {
  if (shell.empty()) throw Error("recourse_probe: empty shell");
  RecourseReport r;
  r.base_id = base.id;
  r.base_score = base_score;
  r.base_class = predicted_class(base_score, class_threshold);
  r.class_threshold = class_threshold;
  r.shell_size = shell.size();
  const ShellSample* best = nullptr;
  for (const auto& s : shell) {
    r.min_similarity = std::min(r.min_similarity, s.similarity);
    if (s.similarity < 1.0) {
      const double sens = std::abs(s.score - base_score) / (1.0 - s.similarity);
      if (!r.max_sensitivity || sens > *r.max_sensitivity) r.max_sensitivity = sens;
    }
    if (predicted_class(s.score, class_threshold) == r.base_class) continue;
    ++r.crossing_count;
    if (!best || s.similarity > best->similarity ||
        (s.similarity == best->similarity && s.sample.id < best->sample.id))
      best = &s;
  }
  if (!best) {
    r.message = "no recourse found within similarity " +
                format_double(r.min_similarity);
    return r;
  }
  r.found = true;
  r.best_id = best->sample.id;
  r.best_similarity = best->similarity;
  r.best_score = best->score;
  for (std::size_t k = 0; k < schema.feature_count(); ++k) {
    const auto& from = base.features[k];
    const auto& to = best->sample.features[k];
    if (from && to && *from != *to)
      r.deltas.push_back({schema.feature_names()[k], *from, *to, *to - *from});
  }
  r.message = "recourse found: " + std::to_string(r.deltas.size()) +
              " feature change(s) at similarity " + format_double(r.best_similarity);
  return r;
}

template <SampleScorer Scorer>
RecourseReport recourse_probe(const Scorer& scorer, const Sample& base,
                              std::vector<ShellSample> shell,
                              const FeatureSchema& schema,
                              double class_threshold = kDefaultClassThreshold) {
  const double base_score = scorer(base);
  score_shell(shell, scorer, base_score, class_threshold);
  return recourse_from_scored_shell(base, base_score, shell, schema, class_threshold);
}

inline RecourseReport recourse_probe(const LinearModel& model, const Sample& base,
                                     std::vector<ShellSample> shell,
                                     const FeatureSchema& schema,
                                     double class_threshold = kDefaultClassThreshold) {
  return recourse_probe(LinearScorer(model, schema), base, std::move(shell), schema,
                        class_threshold);
}

}  // namespace gowermatch
