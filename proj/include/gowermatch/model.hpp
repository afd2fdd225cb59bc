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
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/text_io.hpp"

namespace gowermatch {

// Logistic function, evaluated without overflow and kept strictly in (0, 1).
inline double logistic(double z) {
  double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, std::numeric_limits<double>::denorm_min(),
                    std::nextafter(1.0, 0.0));
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

struct Regularization {
  double l1 = 0.0;
  double l2 = 0.0;
};

struct TrainOptions {
  Regularization regularization;
  std::size_t max_iterations = 2000;
  // Stop once the norm of the proximal gradient mapping drops below this.
  double tolerance = 1e-7;
  std::uint64_t seed = 0;
};

enum class StopReason { kTolerance, kIterationBudget, kStepUnderflow };

inline std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kTolerance: return "tolerance";
    case StopReason::kIterationBudget: return "iteration_budget";
    case StopReason::kStepUnderflow: return "step_underflow";
  }
  return "unknown";
}

// Logistic regression on standardized features:
//   score(x) = logistic(intercept + sum_k w_k (x_k - mean_k) / scale_k)
// Missing cells are replaced by the training mean.
struct LinearModel {
  std::string name = "logistic_regression";
  std::vector<std::string> features;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;
  double intercept = 0.0;
  TrainOptions options;

  // Training record.
  std::vector<std::string> dropped_features;
  StopReason stop_reason = StopReason::kIterationBudget;
  std::size_t iterations = 0;
  double objective = 0.0;
  // Composite objective after each accepted iteration, starting at the
  // initial point.
  std::vector<double> objective_trace;

  double weight_norm() const {
    double s = 0.0;
    for (double w : weights) s += w * w;
    return std::sqrt(s);
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["features"] = features;
    j["weights"] = weights;
    j["intercept"] = intercept;
    j["means"] = means;
    j["scales"] = scales;
    j["l1"] = options.regularization.l1;
    j["l2"] = options.regularization.l2;
    j["max_iterations"] = options.max_iterations;
    j["tolerance"] = options.tolerance;
    j["seed"] = options.seed;
    j["dropped_features"] = dropped_features;
    j["stop_reason"] = std::string(stop_reason_name(stop_reason));
    j["iterations"] = iterations;
    j["objective"] = objective;
    return j.dump(2) + "\n";
  }

  static LinearModel from_json(std::string_view text) {
    LinearModel m;
    try {
      auto j = nlohmann::json::parse(text);
      m.name = j.at("name").get<std::string>();
      m.features = j.at("features").get<std::vector<std::string>>();
      m.weights = j.at("weights").get<std::vector<double>>();
      m.intercept = j.at("intercept").get<double>();
      m.means = j.at("means").get<std::vector<double>>();
      m.scales = j.at("scales").get<std::vector<double>>();
      m.options.regularization.l1 = j.value("l1", 0.0);
      m.options.regularization.l2 = j.value("l2", 0.0);
      m.options.max_iterations = j.value("max_iterations", std::size_t{0});
      m.options.tolerance = j.value("tolerance", 0.0);
      m.options.seed = j.value("seed", std::uint64_t{0});
      m.dropped_features =
          j.value("dropped_features", std::vector<std::string>{});
      m.iterations = j.value("iterations", std::size_t{0});
      m.objective = j.value("objective", 0.0);
      auto reason = j.value("stop_reason", std::string{});
      for (auto r : {StopReason::kTolerance, StopReason::kIterationBudget,
                     StopReason::kStepUnderflow})
        if (stop_reason_name(r) == reason) m.stop_reason = r;
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("model: invalid JSON: ") + e.what());
    }
    const std::size_t p = m.features.size();
    if (m.weights.size() != p || m.means.size() != p || m.scales.size() != p)
      throw Error("model: features, weights, means and scales differ in length");
    for (double s : m.scales)
      if (!(s > 0.0)) throw Error("model: every scale must be positive");
    return m;
  }
};

namespace detail {

// Mean logistic loss plus (l2 / 2) * ||w||^2 over a standardized design.
// Parameter layout: [intercept, w_1, ..., w_p]. The intercept is not
// penalized.
class LogisticObjective {
 public:
  LogisticObjective(std::vector<double> design, std::vector<double> labels,
                    std::size_t features, double l2)
      : z_(std::move(design)), y_(std::move(labels)), p_(features), l2_(l2) {}

  std::size_t dimension() const { return p_ + 1; }
  std::size_t rows() const { return y_.size(); }

  double value(std::span<const double> params) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i)
      loss += softplus(-y_[i] * margin(params, i));
    loss /= static_cast<double>(y_.size());
    return loss + 0.5 * l2_ * penalty_sq(params);
  }

  std::vector<double> gradient(std::span<const double> params) const {
    std::vector<double> g(p_ + 1, 0.0);
    const double inv_n = 1.0 / static_cast<double>(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) {
      // d/dm softplus(-y m) = -y * logistic(-y m)
      const double m = margin(params, i);
      const double coef = -y_[i] * sigmoid(-y_[i] * m) * inv_n;
      g[0] += coef;
      const double* row = &z_[i * p_];
      for (std::size_t k = 0; k < p_; ++k) g[k + 1] += coef * row[k];
    }
    for (std::size_t k = 1; k <= p_; ++k) g[k] += l2_ * params[k];
    return g;
  }

 private:
  static double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }

  double margin(std::span<const double> params, std::size_t i) const {
    double m = params[0];
    const double* row = &z_[i * p_];
    for (std::size_t k = 0; k < p_; ++k) m += params[k + 1] * row[k];
    return m;
  }

  double penalty_sq(std::span<const double> params) const {
    double s = 0.0;
    for (std::size_t k = 1; k <= p_; ++k) s += params[k] * params[k];
    return s;
  }

  std::vector<double> z_;
  std::vector<double> y_;
  std::size_t p_;
  double l2_;
};

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double l1_norm_weights(std::span<const double> params) {
  double s = 0.0;
  for (std::size_t k = 1; k < params.size(); ++k) s += std::abs(params[k]);
  return s;
}

struct Standardized {
  std::vector<std::string> features;
  std::vector<std::size_t> columns;
  std::vector<double> means, scales;
  std::vector<std::string> dropped;
};

inline Standardized standardize(const Dataset& train,
                                const std::vector<std::string>& features) {
  Standardized st;
  for (const auto& name : features) {
    auto idx = train.schema.feature_index(name);
    if (!idx) throw Error("train_logistic: unknown feature '" + name + "'");
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : train.rows)
      if (const auto& v = s.features[*idx]) {
        sum += *v;
        ++n;
      }
    if (n == 0) {
      st.dropped.push_back(name);
      continue;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& s : train.rows) {
      const double v = s.features[*idx].value_or(mean);
      ss += (v - mean) * (v - mean);
    }
    const double scale = std::sqrt(ss / static_cast<double>(train.size()));
    if (!(scale > 1e-12 * std::max(1.0, std::abs(mean)))) {
      st.dropped.push_back(name);
      continue;
    }
    st.features.push_back(name);
    st.columns.push_back(*idx);
    st.means.push_back(mean);
    st.scales.push_back(scale);
  }
  return st;
}

}  // namespace detail

// Builds the standardized objective for `train`; exposed so the analytic
// gradient can be checked independently.
inline detail::LogisticObjective make_logistic_objective(
    const Dataset& train, const LinearModel& frame, double l2) {
  const std::size_t p = frame.features.size();
  std::vector<double> design;
  std::vector<double> labels;
  design.reserve(train.size() * p);
  std::vector<std::size_t> cols;
  for (const auto& f : frame.features) cols.push_back(*train.schema.feature_index(f));
  for (const auto& s : train.rows) {
    for (std::size_t k = 0; k < p; ++k) {
      const double v = s.features[cols[k]].value_or(frame.means[k]);
      design.push_back((v - frame.means[k]) / frame.scales[k]);
    }
    labels.push_back(static_cast<double>(to_int(*s.label)));
  }
  return detail::LogisticObjective(std::move(design), std::move(labels), p, l2);
}

// Regularized logistic regression by deterministic full-batch proximal
// gradient descent with backtracking. l2 enters the smooth part; l1 is
// applied by soft-thresholding after each gradient step.
inline LinearModel train_logistic(const Dataset& train,
                                  const std::vector<std::string>& features,
                                  const TrainOptions& options) {
  {
    ViolationList errors;
    std::size_t pos = 0, neg = 0;
    for (std::size_t r = 0; r < train.rows.size(); ++r) {
      const auto& s = train.rows[r];
      if (!s.label) errors.add("train_logistic: row " + std::to_string(r + 1) +
                               " ('" + s.id + "') has no label");
      else if (to_int(*s.label) > 0) ++pos;
      else ++neg;
    }
    if (pos == 0 || neg == 0)
      errors.add("train_logistic: training data must contain both labels");
    if (options.regularization.l1 < 0.0 || options.regularization.l2 < 0.0)
      errors.add("train_logistic: regularization strengths must be >= 0");
    errors.throw_if_any();
  }

  detail::Standardized st = detail::standardize(train, features);
  LinearModel model;
  model.features = st.features;
  model.means = st.means;
  model.scales = st.scales;
  model.options = options;
  model.dropped_features = st.dropped;

  const double l1 = options.regularization.l1;
  auto objective =
      make_logistic_objective(train, model, options.regularization.l2);
  const std::size_t dim = objective.dimension();
  std::vector<double> x(dim, 0.0), next(dim);
  double smooth = objective.value(x);
  double composite = smooth + l1 * detail::l1_norm_weights(x);
  model.objective_trace.push_back(composite);

  double step = 1.0;
  model.stop_reason = StopReason::kIterationBudget;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    const std::vector<double> g = objective.gradient(x);
    double next_smooth = 0.0;
    double mapping_sq = 0.0;
    bool accepted = false;
    while (step > 1e-20) {
      double lin = 0.0, dist_sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = x[k] - step * g[k];
        next[k] = k == 0 ? v : detail::soft_threshold(v, step * l1);
        const double delta = next[k] - x[k];
        lin += g[k] * delta;
        dist_sq += delta * delta;
      }
      next_smooth = objective.value(next);
      if (next_smooth <= smooth + lin + dist_sq / (2.0 * step)) {
        mapping_sq = dist_sq / (step * step);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      model.stop_reason = StopReason::kStepUnderflow;
      break;
    }
    const double next_composite = next_smooth + l1 * detail::l1_norm_weights(next);
    // The sufficient-decrease test guarantees descent in exact arithmetic;
    // reject rounding-level increases so the trace stays monotone.
    if (next_composite > composite) {
      model.stop_reason = StopReason::kTolerance;
      break;
    }
    x.swap(next);
    smooth = next_smooth;
    composite = next_composite;
    model.objective_trace.push_back(composite);
    if (std::sqrt(mapping_sq) <= options.tolerance) {
      model.stop_reason = StopReason::kTolerance;
      ++it;
      break;
    }
    step = std::min(step * 2.0, 1e6);
  }
  model.iterations = it;
  model.intercept = x[0];
  model.weights.assign(x.begin() + 1, x.end());
  model.objective = composite;
  return model;
}

// Every value feature of the schema, in declaration order.
inline std::vector<std::string> all_features(const FeatureSchema& schema) {
  return schema.feature_names();
}

// Binds a model to a schema's feature layout.
class LinearScorer {
 public:
  LinearScorer(const LinearModel& model, const FeatureSchema& schema)
      : model_(&model) {
    ViolationList errors;
    for (const auto& f : model.features) {
      auto idx = schema.feature_index(f);
      if (!idx) errors.add("model feature '" + f + "' is not in the schema");
      else columns_.push_back(*idx);
    }
    errors.throw_if_any();
  }

  double linear_predictor(std::span<const FeatureValue> features) const {
    double z = model_->intercept;
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      const double v = features[columns_[k]].value_or(model_->means[k]);
      z += model_->weights[k] * ((v - model_->means[k]) / model_->scales[k]);
    }
    return z;
  }

  double operator()(const Sample& s) const {
    return logistic(linear_predictor(s.features));
  }

  const LinearModel& model() const { return *model_; }

 private:
  const LinearModel* model_;
  std::vector<std::size_t> columns_;
};

// ---------------------------------------------------------------------------
// Score files

struct ScoreRow {
  std::string id;
  double score = 0.0;
};

struct ScoreFile {
  std::string model_name;
  std::vector<ScoreRow> rows;

  std::unordered_map<std::string, double> by_id() const {
    std::unordered_map<std::string, double> m;
    for (const auto& r : rows) m.emplace(r.id, r.score);
    return m;
  }
};

inline ScoreFile predict_scores(const LinearModel& model, const Dataset& data) {
  LinearScorer scorer(model, data.schema);
  ScoreFile out;
  out.model_name = model.name;
  out.rows.reserve(data.size());
  for (const auto& s : data.rows) out.rows.push_back({s.id, scorer(s)});
  return out;
}

inline std::string format_scores(const ScoreFile& scores) {
  std::string out = "id,score\n";
  for (const auto& r : scores.rows)
    out += escape_csv_field(r.id) + "," + format_double(r.score) + "\n";
  return out;
}

inline ScoreFile parse_scores(const CsvTable& table, std::string model_name) {
  ViolationList errors;
  if (table.header.size() < 2 || table.header[0] != "id" ||
      table.header[1] != "score") {
    errors.add("score file: header must start with id,score");
    errors.throw_if_any();
  }
  ScoreFile out;
  out.model_name = std::move(model_name);
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& c = table.rows[r];
    const std::string where = "row " + std::to_string(r + 1);
    if (c.size() != table.header.size()) {
      errors.add(where + ": wrong column count");
      continue;
    }
    auto v = parse_double(c[1]);
    if (!v) {
      errors.add(where + ": non-numeric score '" + c[1] + "'");
      continue;
    }
    if (*v < 0.0 || *v > 1.0)
      errors.add(where + ": score " + c[1] + " outside [0, 1]");
    if (!seen.insert(c[0]).second)
      errors.add(where + ": duplicate id '" + c[0] + "'");
    out.rows.push_back({c[0], *v});
  }
  errors.throw_if_any();
  return out;
}

// Scores produced outside this library (other classifier families). The
// model name defaults to the file stem.
inline ScoreFile load_external_scores(const std::filesystem::path& path,
                                      std::string model_name = {}) {
  if (model_name.empty()) model_name = path.stem().string();
  try {
    return parse_scores(read_csv_file(path), std::move(model_name));
  } catch (const ValidationError& e) {
    std::vector<std::string> v;
    for (const auto& m : e.violations()) v.push_back(path.string() + ": " + m);
    throw ValidationError(std::move(v));
  }
}

}  // namespace gowermatch
