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

#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <type_traits>
#include <unordered_set>
#include <ostream>
#include <sstream>
#include <string_view>

#include "CLI11.hpp"
#include "gowermatch/gowermatch.hpp"
#include "gowermatch/synthetic.hpp"
#include "json.hpp"

namespace gowermatch::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Artifacts inside the output directory, with the command producing each.
struct Artifact {
  const char* file;
  const char* producer;
};

constexpr Artifact kTrain{"train.csv", "split"};
constexpr Artifact kTest{"test.csv", "split"};
constexpr Artifact kRanges{"ranges.json", "ranges"};
constexpr Artifact kParams{"params.json", "calibrate"};
constexpr Artifact kMatchesTrain{"matches_train.csv", "match"};
constexpr Artifact kMatchesTest{"matches_test.csv", "match"};
constexpr Artifact kSimilarTrain{"similar_train.csv", "augment"};
constexpr Artifact kSimilarTest{"similar_test.csv", "augment"};
constexpr Artifact kTrainAugmented{"train_augmented.csv", "augment"};
constexpr Artifact kModel{"model.json", "train"};
constexpr Artifact kModelAugmented{"model_augmented.json", "train"};
constexpr Artifact kScores{"scores/logistic_regression.csv", "score"};
constexpr Artifact kScoresAugmented{"scores/logistic_regression_augmented.csv", "score"};

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

std::string path_text(const fs::path& p) { return p.generic_string(); }

// ---------------------------------------------------------------------------
// RunConfig (de)serialization

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& target,
                const std::string& where, ViolationList& errors) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    target = j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.add("config: '" + where + key + "' has the wrong type");
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, std::optional<T>& target,
                const std::string& where, ViolationList& errors) {
  T value{};
  if (!j.contains(key) || j[key].is_null()) return;
  read_field(j, key, value, where, errors);
  target = value;
}

void read_path(const nlohmann::json& j, const char* key, fs::path& target,
               const fs::path& base, const std::string& where,
               ViolationList& errors) {
  std::string s;
  read_field(j, key, s, where, errors);
  if (!s.empty()) target = fs::path(s).is_absolute() ? fs::path(s) : base / s;
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& where, ViolationList& errors) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return it.key() == k; }))
      errors.add("config: unknown key '" + where + it.key() + "'");
}

std::optional<std::pair<double, double>> read_interval(const nlohmann::json& j,
                                                       const char* key,
                                                       ViolationList& errors) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  const auto& v = j[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    errors.add(std::string("config: 'probe.") + key + "' must be [lo, hi]");
    return std::nullopt;
  }
  return std::pair{v[0].get<double>(), v[1].get<double>()};
}

ojson interval_json(const std::optional<std::pair<double, double>>& v) {
  return v ? ojson::array({v->first, v->second}) : ojson(nullptr);
}

void validate(const RunConfig& c) {
  ViolationList errors;
  auto unit = [&](const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0)) errors.add(std::string("config: ") + name + " must be in [0, 1]");
  };
  unit("split_fraction", c.split_fraction);
  unit("percentile", c.percentile);
  unit("confidence_budget", c.confidence_budget);
  unit("class_threshold", c.class_threshold);
  unit("probe.d", c.probe.d);
  if (c.d) unit("d", *c.d);
  if (c.c) unit("c", *c.c);
  if (!(c.regularization.l1 >= 0.0)) errors.add("config: model.l1 must be >= 0");
  if (!(c.regularization.l2 >= 0.0)) errors.add("config: model.l2 must be >= 0");
  if (c.max_iterations == 0) errors.add("config: model.max_iterations must be > 0");
  if (!(c.tolerance > 0.0)) errors.add("config: model.tolerance must be > 0");
  if (c.workers == 0) errors.add("config: workers must be > 0");
  if (c.probe.x_count == 0 || c.probe.y_count == 0)
    errors.add("config: probe grid counts must be > 0");
  if (c.probe.count == 0) errors.add("config: probe.count must be > 0");
  for (const auto& e : c.external_scores)
    if (e.name.empty() || e.path.empty())
      errors.add("config: every external_scores entry needs a name and a path");
  errors.throw_if_any();
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: expected a JSON object");
  RunConfig c;
  ViolationList errors;
  reject_unknown(j,
                 {"labeled", "unlabeled", "schema", "out_dir", "split_fraction",
                  "percentile", "confidence_budget", "d", "c", "model",
                  "external_scores", "class_threshold", "probe", "seed"},
                 "", errors);
  read_path(j, "labeled", c.labeled, base_dir, "", errors);
  read_path(j, "unlabeled", c.unlabeled, base_dir, "", errors);
  read_path(j, "schema", c.schema, base_dir, "", errors);
  read_path(j, "out_dir", c.out_dir, base_dir, "", errors);
  read_field(j, "split_fraction", c.split_fraction, "", errors);
  read_field(j, "percentile", c.percentile, "", errors);
  read_field(j, "confidence_budget", c.confidence_budget, "", errors);
  read_field(j, "d", c.d, "", errors);
  read_field(j, "c", c.c, "", errors);
  read_field(j, "class_threshold", c.class_threshold, "", errors);
  read_field(j, "seed", c.seed, "", errors);
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (!m.is_object()) {
      errors.add("config: 'model' must be an object");
    } else {
      reject_unknown(m, {"l1", "l2", "max_iterations", "tolerance", "features"},
                     "model.", errors);
      read_field(m, "l1", c.regularization.l1, "model.", errors);
      read_field(m, "l2", c.regularization.l2, "model.", errors);
      read_field(m, "max_iterations", c.max_iterations, "model.", errors);
      read_field(m, "tolerance", c.tolerance, "model.", errors);
      read_field(m, "features", c.features, "model.", errors);
    }
  }
  if (j.contains("external_scores")) {
    const auto& list = j["external_scores"];
    if (!list.is_array()) errors.add("config: 'external_scores' must be an array");
    else
      for (const auto& e : list) {
        ExternalScores x;
        if (!e.is_object()) {
          errors.add("config: external_scores entries must be objects");
          continue;
        }
        reject_unknown(e, {"name", "path", "augmented"}, "external_scores.", errors);
        read_field(e, "name", x.name, "external_scores.", errors);
        read_path(e, "path", x.path, base_dir, "external_scores.", errors);
        read_field(e, "augmented", x.augmented, "external_scores.", errors);
        c.external_scores.push_back(std::move(x));
      }
  }
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    if (!p.is_object()) {
      errors.add("config: 'probe' must be an object");
    } else {
      reject_unknown(p,
                     {"base_id", "augmented_model", "feature_x", "feature_y", "x_count",
                      "y_count", "x_range", "y_range", "vary", "d", "count"},
                     "probe.", errors);
      read_field(p, "base_id", c.probe.base_id, "probe.", errors);
      read_field(p, "augmented_model", c.probe.augmented_model, "probe.", errors);
      read_field(p, "feature_x", c.probe.feature_x, "probe.", errors);
      read_field(p, "feature_y", c.probe.feature_y, "probe.", errors);
      read_field(p, "x_count", c.probe.x_count, "probe.", errors);
      read_field(p, "y_count", c.probe.y_count, "probe.", errors);
      c.probe.x_range = read_interval(p, "x_range", errors);
      c.probe.y_range = read_interval(p, "y_range", errors);
      read_field(p, "vary", c.probe.vary, "probe.", errors);
      read_field(p, "d", c.probe.d, "probe.", errors);
      read_field(p, "count", c.probe.count, "probe.", errors);
    }
  }
  errors.throw_if_any();
  return c;
}

std::string RunConfig::to_json() const {
  ojson j;
  j["labeled"] = path_text(labeled);
  j["unlabeled"] = path_text(unlabeled);
  j["schema"] = path_text(schema);
  j["out_dir"] = path_text(out_dir);
  j["split_fraction"] = split_fraction;
  j["percentile"] = percentile;
  j["confidence_budget"] = confidence_budget;
  j["d"] = d ? ojson(*d) : ojson(nullptr);
  j["c"] = c ? ojson(*c) : ojson(nullptr);
  j["model"] = {{"l1", regularization.l1},
                {"l2", regularization.l2},
                {"max_iterations", max_iterations},
                {"tolerance", tolerance},
                {"features", features}};
  j["external_scores"] = ojson::array();
  for (const auto& e : external_scores)
    j["external_scores"].push_back(
        {{"name", e.name}, {"path", path_text(e.path)}, {"augmented", e.augmented}});
  j["class_threshold"] = class_threshold;
  j["probe"] = {{"base_id", probe.base_id},
                {"augmented_model", probe.augmented_model},
                {"feature_x", probe.feature_x},
                {"feature_y", probe.feature_y},
                {"x_count", probe.x_count},
                {"y_count", probe.y_count},
                {"x_range", interval_json(probe.x_range)},
                {"y_range", interval_json(probe.y_range)},
                {"vary", probe.vary},
                {"d", probe.d},
                {"count", probe.count}};
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

namespace {

// ---------------------------------------------------------------------------
// Command context

class Context {
 public:
  Context(RunConfig config, std::ostream& out) : cfg(std::move(config)), out_(out) {}

  RunConfig cfg;

  // Checks the named configured input files exist, reporting all gaps.
  void require_inputs(std::initializer_list<std::pair<const char*, const fs::path*>> inputs) {
    ViolationList errors;
    for (const auto& [name, path] : inputs) {
      if (path->empty()) errors.add(std::string("config: '") + name + "' is not set");
      else if (!fs::is_regular_file(*path))
        errors.add(std::string("config: ") + name + " file not found: " + path_text(*path));
    }
    errors.throw_if_any();
  }

  fs::path artifact(const Artifact& a) const {
    fs::path p = cfg.out_dir / a.file;
    if (!fs::is_regular_file(p))
      throw MissingArtifact("missing " + path_text(p) + ": run `" + a.producer +
                            "` first");
    return p;
  }

  const FeatureSchema& schema() {
    if (!schema_) {
      require_inputs({{"schema", &cfg.schema}});
      schema_ = FeatureSchema::from_json(read_text_file(cfg.schema));
    }
    return *schema_;
  }

  Dataset load(const fs::path& path) { return load_dataset(path, schema()); }
  Dataset load(const Artifact& a) { return load(artifact(a)); }
  RangeTable ranges() {
    return RangeTable::from_json(read_text_file(artifact(kRanges)), schema());
  }

  void write(const std::string& file, std::string_view content) {
    write_file_atomic(cfg.out_dir / file, content);
    outputs_.push_back(file);
  }

  // Records the run manifest and prints the one-line summary.
  void finish(std::string_view command, const std::string& summary) {
    ojson m;
    m["command"] = command;
    m["summary"] = summary;
    m["outputs"] = outputs_;
    m["config"] = ojson::parse(cfg.to_json());
    write_file_atomic(cfg.out_dir / "run" / (std::string(command) + ".json"),
                      m.dump(2) + "\n");
    std::string dir = path_text(cfg.out_dir);
    std::string files;
    for (const auto& o : outputs_) files += (files.empty() ? "" : ", ") + o;
    out_ << command << ": " << summary;
    if (!files.empty()) out_ << " -> " << dir << "/{" << files << "}";
    out_ << "\n";
    outputs_.clear();
  }

 private:
  std::ostream& out_;
  std::optional<FeatureSchema> schema_;
  std::vector<std::string> outputs_;
};

std::string pct(double fraction) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << 100.0 * fraction << "%";
  return s.str();
}

SimilarityParams load_params(Context& ctx) {
  SimilarityParams p;
  try {
    auto j = nlohmann::json::parse(read_text_file(ctx.artifact(kParams)));
    p.d = j.at("d").get<double>();
    p.c = j.at("c").get<double>();
    p.provenance = j.value("provenance", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("params: invalid file: ") + e.what());
  }
  p.validate();
  return p;
}

std::size_t count_confident(const std::vector<MatchResult>& m) {
  return std::count_if(m.begin(), m.end(),
                       [](const MatchResult& r) { return r.estimated_label != 0; });
}

// ---------------------------------------------------------------------------
// Commands

void cmd_split(Context& ctx) {
  ctx.require_inputs({{"schema", &ctx.cfg.schema}, {"labeled", &ctx.cfg.labeled}});
  Dataset data = ctx.load(ctx.cfg.labeled);
  ViolationList errors;
  for (const auto& s : data.rows)
    if (!s.label) errors.add("labeled file: row '" + s.id + "' has no label");
  errors.throw_if_any();
  Split s = time_holdout_split(data, ctx.cfg.split_fraction);
  ctx.write(kTrain.file, format_dataset(s.train));
  ctx.write(kTest.file, format_dataset(s.test));
  std::string holdout = "none";
  if (!s.test.empty())
    holdout = std::min_element(s.test.rows.begin(), s.test.rows.end(),
                               [](const Sample& a, const Sample& b) {
                                 return a.timestamp < b.timestamp;
                               })->timestamp.text;
  ctx.finish("split", std::to_string(s.train.size()) + " train / " +
                          std::to_string(s.test.size()) + " test rows, holdout " +
                          holdout);
}

void cmd_ranges(Context& ctx) {
  ctx.require_inputs({{"schema", &ctx.cfg.schema},
                      {"labeled", &ctx.cfg.labeled},
                      {"unlabeled", &ctx.cfg.unlabeled}});
  Dataset lab = ctx.load(ctx.cfg.labeled);
  Dataset unl = ctx.load(ctx.cfg.unlabeled);
  std::vector<std::reference_wrapper<const Dataset>> sources{lab, unl};
  RangeTable ranges = compute_ranges(sources, ctx.schema());
  ctx.write(kRanges.file, ranges.to_json());
  ctx.finish("ranges", std::to_string(ranges.entries().size()) +
                           " similarity features pooled over " +
                           std::to_string(lab.size() + unl.size()) + " rows");
}

void cmd_calibrate(Context& ctx) {
  ctx.require_inputs({{"schema", &ctx.cfg.schema}, {"unlabeled", &ctx.cfg.unlabeled}});
  Dataset train = ctx.load(kTrain);
  RangeTable ranges = ctx.ranges();
  Dataset unl = ctx.load(ctx.cfg.unlabeled);
  if (train.size() < 2) throw Error("calibrate: need at least 2 labeled train rows");
  if (unl.empty()) throw Error("calibrate: the unlabeled set is empty");

  const auto pairs = pairwise_similarities(train, ranges, ctx.cfg.workers);
  std::string provenance;
  double d;
  if (ctx.cfg.d) {
    d = *ctx.cfg.d;
    provenance = "d manual";
  } else {
    d = nearest_rank(pairs, ctx.cfg.percentile);
    provenance = "d = nearest-rank " + format_double(ctx.cfg.percentile) +
                 " percentile of " + std::to_string(pairs.size()) +
                 " pairwise train similarities";
  }
  const auto votes = compute_votes(unl, train, ranges, d, ctx.cfg.workers);
  double c;
  if (ctx.cfg.c) {
    c = *ctx.cfg.c;
    provenance += "; c manual";
  } else {
    c = confidence_threshold_from_votes(votes, ctx.cfg.confidence_budget);
    provenance += "; c = smallest threshold assigning < " +
                  pct(ctx.cfg.confidence_budget) + " of unlabeled rows";
  }
  const double fraction = assigned_fraction(votes, c);
  std::size_t defined = 0;
  for (const auto& t : votes) defined += t.has_value();

  ojson j;
  j["d"] = d;
  j["c"] = c;
  j["provenance"] = provenance;
  j["assigned_fraction"] = fraction;
  j["assigned"] = static_cast<std::size_t>(std::llround(fraction * double(votes.size())));
  j["unlabeled_rows"] = votes.size();
  j["unlabeled_with_vote"] = defined;
  // Labeled rows should be mutually dissimilar; this is reported, not enforced.
  j["labeled_pairwise_similarity"] = {{"pairs", pairs.size()},
                                      {"min", pairs.front()},
                                      {"p05", nearest_rank(pairs, 0.05)},
                                      {"p50", nearest_rank(pairs, 0.5)},
                                      {"p95", nearest_rank(pairs, 0.95)},
                                      {"max", pairs.back()}};
  ctx.write(kParams.file, j.dump(2) + "\n");
  ctx.finish("calibrate", "d=" + format_double(d) + " c=" + format_double(c) +
                              ", assigned " + pct(fraction) + " of " +
                              std::to_string(votes.size()) + " unlabeled rows");
}

void cmd_match(Context& ctx) {
  ctx.require_inputs({{"schema", &ctx.cfg.schema}, {"unlabeled", &ctx.cfg.unlabeled}});
  Dataset train = ctx.load(kTrain);
  Dataset test = ctx.load(kTest);
  RangeTable ranges = ctx.ranges();
  SimilarityParams params = load_params(ctx);
  Dataset unl = ctx.load(ctx.cfg.unlabeled);
  if (test.empty()) throw Error("match: the test split is empty; raise split_fraction");
  // Train- and test-side matches use only their own labeled rows.
  auto mtr = match_batch(unl, train, ranges, params, ctx.cfg.workers);
  auto mte = match_batch(unl, test, ranges, params, ctx.cfg.workers);
  ctx.write(kMatchesTrain.file, format_match_results(mtr, ctx.schema()));
  ctx.write("contributors_train.json", format_contributors(mtr));
  ctx.write(kMatchesTest.file, format_match_results(mte, ctx.schema()));
  ctx.write("contributors_test.json", format_contributors(mte));
  ctx.finish("match", std::to_string(count_confident(mtr)) + " train-side and " +
                          std::to_string(count_confident(mte)) +
                          " test-side confident matches of " +
                          std::to_string(unl.size()) + " unlabeled rows");
}

void cmd_augment(Context& ctx) {
  ctx.require_inputs({{"schema", &ctx.cfg.schema}, {"unlabeled", &ctx.cfg.unlabeled}});
  Dataset train = ctx.load(kTrain);
  auto mtr = parse_match_results(read_csv_file(ctx.artifact(kMatchesTrain)), ctx.schema());
  auto mte = parse_match_results(read_csv_file(ctx.artifact(kMatchesTest)), ctx.schema());
  Dataset unl = ctx.load(ctx.cfg.unlabeled);

  // A row confidently matched on the test side never enters training.
  std::unordered_set<std::string> test_side;
  for (const auto& m : mte)
    if (m.estimated_label != 0) test_side.insert(m.unlabeled_id);
  std::size_t withheld = 0;
  for (auto& m : mtr)
    if (m.estimated_label != 0 && test_side.count(m.unlabeled_id)) {
      m.estimated_label = 0;
      m.imputed.reset();
      ++withheld;
    }

  Dataset sim_train = build_similar_dataset(mtr, unl);
  Dataset sim_test = build_similar_dataset(mte, unl);
  Dataset augmented = merge_datasets(train, sim_train);
  ctx.write(kSimilarTrain.file, format_dataset(sim_train));
  ctx.write(kSimilarTest.file, format_dataset(sim_test));
  ctx.write(kTrainAugmented.file, format_dataset(augmented));
  ctx.finish("augment", std::to_string(train.size()) + " real + " +
                            std::to_string(sim_train.size()) + " similar train rows (" +
                            std::to_string(withheld) + " withheld as test-side), " +
                            std::to_string(sim_test.size()) + " similar test rows");
}

void cmd_train(Context& ctx) {
  Dataset train = ctx.load(kTrain);
  Dataset augmented = ctx.load(kTrainAugmented);
  const auto features =
      ctx.cfg.features.empty() ? all_features(ctx.schema()) : ctx.cfg.features;
  TrainOptions opts{ctx.cfg.regularization, ctx.cfg.max_iterations, ctx.cfg.tolerance,
                    ctx.cfg.seed};
  LinearModel plain = train_logistic(train, features, opts);
  LinearModel aug = train_logistic(augmented, features, opts);
  ctx.write(kModel.file, plain.to_json());
  ctx.write(kModelAugmented.file, aug.to_json());
  auto describe = [](const LinearModel& m) {
    std::string s = std::to_string(m.iterations) + " iterations (" +
                    std::string(stop_reason_name(m.stop_reason)) + ")";
    if (!m.dropped_features.empty())
      s += ", dropped " + std::to_string(m.dropped_features.size()) + " constant feature(s)";
    return s;
  };
  ctx.finish("train", "plain " + describe(plain) + "; augmented " + describe(aug));
}

LinearModel load_model(Context& ctx, const Artifact& a) {
  return LinearModel::from_json(read_text_file(ctx.artifact(a)));
}

void cmd_score(Context& ctx) {
  LinearModel plain = load_model(ctx, kModel);
  LinearModel aug = load_model(ctx, kModelAugmented);
  Dataset rows = ctx.load(kTest);
  Dataset sim = ctx.load(kSimilarTest);
  // One file per model covers both test sets; similar ids carry a prefix.
  for (auto& s : sim.rows) rows.rows.push_back(std::move(s));
  ctx.write(kScores.file, format_scores(predict_scores(plain, rows)));
  ctx.write(kScoresAugmented.file, format_scores(predict_scores(aug, rows)));
  ctx.finish("score", "2 models scored on " + std::to_string(rows.size()) + " rows");
}

void cmd_evaluate(Context& ctx) {
  Dataset test = ctx.load(kTest);
  Dataset sim = ctx.load(kSimilarTest);
  std::vector<ModelScores> models{
      {"logistic_regression", false,
       load_external_scores(ctx.artifact(kScores), "logistic_regression")},
      {"logistic_regression", true,
       load_external_scores(ctx.artifact(kScoresAugmented), "logistic_regression")}};
  ViolationList missing;
  for (const auto& e : ctx.cfg.external_scores)
    if (!fs::is_regular_file(e.path))
      missing.add("external scores '" + e.name + "' not found: " + path_text(e.path));
  missing.throw_if_any();
  for (const auto& e : ctx.cfg.external_scores)
    models.push_back({e.name, e.augmented, load_external_scores(e.path, e.name)});
  std::vector<NamedDataset> sets{{"real", std::move(test)}, {"similar", std::move(sim)}};

  EvalReport report = evaluate_table(models, sets, ctx.cfg.class_threshold);
  report.metadata["split_fraction"] = ctx.cfg.split_fraction;
  const fs::path params = ctx.cfg.out_dir / kParams.file;
  if (fs::is_regular_file(params)) {
    auto p = load_params(ctx);
    report.metadata["d"] = p.d;
    report.metadata["c"] = p.c;
    report.metadata["threshold_provenance"] = p.provenance;
  }
  report.metadata["config"] = ojson::parse(ctx.cfg.to_json());
  ctx.write("report.json", report.to_json());
  ctx.write("report.txt", report.to_text());
  std::string deltas;
  for (const auto& d : report.deltas)
    deltas += " " + d.model + "@" + d.testset + "=" +
              (d.delta ? format_double(std::round(*d.delta * 1e4) / 1e4) : "n/a");
  ctx.finish("evaluate", std::to_string(models.size()) + " models x " +
                             std::to_string(sets.size()) + " test sets, " +
                             std::to_string(report.comparisons.size()) +
                             " McNemar comparisons; augmentation delta" + deltas);
}

// The probe's base sample: probe.base_id looked up in the splits and the
// unlabeled file, or the first test row.
Sample find_base(Context& ctx) {
  Dataset test = ctx.load(kTest);
  const std::string& id = ctx.cfg.probe.base_id;
  if (id.empty()) {
    if (test.empty()) throw Error("probe: the test split is empty; set probe.base_id");
    return test.rows.front();
  }
  std::vector<Dataset> pool;
  pool.push_back(std::move(test));
  pool.push_back(ctx.load(kTrain));
  if (!ctx.cfg.unlabeled.empty() && fs::is_regular_file(ctx.cfg.unlabeled))
    pool.push_back(ctx.load(ctx.cfg.unlabeled));
  for (const auto& d : pool)
    for (const auto& s : d.rows)
      if (s.id == id) return s;
  throw Error("probe: base sample '" + id + "' not found");
}

void cmd_probe_grid(Context& ctx) {
  LinearModel model =
      load_model(ctx, ctx.cfg.probe.augmented_model ? kModelAugmented : kModel);
  Sample base = find_base(ctx);
  Dataset train = ctx.load(kTrain);
  const auto& p = ctx.cfg.probe;
  std::string fx = p.feature_x, fy = p.feature_y;
  if (fx.empty() || fy.empty()) {
    if (model.features.size() < 2) throw Error("probe-grid: the model has fewer than 2 features");
    if (fx.empty()) fx = model.features[0] != fy ? model.features[0] : model.features[1];
    if (fy.empty()) fy = model.features[1] != fx ? model.features[1] : model.features[0];
  }
  // Axes default to the feature's span over the train split.
  auto axis = [&](const std::string& f, const std::optional<std::pair<double, double>>& r,
                  std::size_t n) {
    if (r) return linspace(r->first, r->second, n);
    auto k = ctx.schema().feature_index(f);
    if (!k) throw ValidationError({"probe-grid: '" + f + "' is not a feature"});
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : train.rows)
      if (const auto& v = s.features[*k]) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
    if (!(lo <= hi)) throw Error("probe-grid: '" + f + "' has no values in the train split");
    return linspace(lo, hi, n);
  };
  ProbeGrid g = probability_grid(model, base, ctx.schema(), fx, fy,
                                 axis(fx, p.x_range, p.x_count),
                                 axis(fy, p.y_range, p.y_count), ctx.cfg.workers);
  ctx.write("grid.csv", format_grid(g));
  ctx.finish("probe-grid", std::to_string(g.x_values.size()) + "x" +
                               std::to_string(g.y_values.size()) + " grid over (" + fx +
                               ", " + fy + ") around '" + base.id + "'");
}

void cmd_probe_shell(Context& ctx) {
  LinearModel model =
      load_model(ctx, ctx.cfg.probe.augmented_model ? kModelAugmented : kModel);
  RangeTable ranges = ctx.ranges();
  Sample base = find_base(ctx);
  ShellSpec spec;
  spec.vary = ctx.cfg.probe.vary;
  if (spec.vary.empty())
    for (const auto& e : ranges.entries()) spec.vary.push_back(e.name);
  spec.d = ctx.cfg.probe.d;
  spec.count = ctx.cfg.probe.count;
  spec.seed = ctx.cfg.seed;
  auto shell = similarity_shell(base, ranges, spec, ctx.cfg.workers);
  LinearScorer scorer(model, ctx.schema());
  const double base_score = scorer(base);
  score_shell(shell, scorer, base_score, ctx.cfg.class_threshold, ctx.cfg.workers);
  RecourseReport r =
      recourse_from_scored_shell(base, base_score, shell, ctx.schema(), ctx.cfg.class_threshold);
  ctx.write("shell.csv", format_shell(shell, ctx.schema()));
  ctx.write("recourse.json", r.to_json());
  ctx.finish("probe-shell", std::to_string(shell.size()) + " samples at d=" +
                                format_double(spec.d) + ", " +
                                std::to_string(r.crossing_count) + " cross; " + r.message);
}

void cmd_report(Context& ctx) {
  for (auto* step : {cmd_split, cmd_ranges, cmd_calibrate, cmd_match, cmd_augment,
                     cmd_train, cmd_score, cmd_evaluate, cmd_probe_grid, cmd_probe_shell})
    step(ctx);
  ctx.finish("report", "pipeline complete, table in " +
                           path_text(ctx.cfg.out_dir / "report.txt"));
}

struct SynthOptions {
  synthetic::TwoClusterSpec spec;
  std::string out;
};

void cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.out.empty()) throw ValidationError({"synth: --out is required"});
  const fs::path dir = o.out;
  auto data = synthetic::make_two_clusters(o.spec);
  write_file_atomic(dir / "schema.json", data.schema.to_json());
  write_dataset(dir / "labeled.csv", data.labeled);
  write_dataset(dir / "unlabeled.csv", data.unlabeled);
  RunConfig cfg;
  cfg.labeled = "labeled.csv";
  cfg.unlabeled = "unlabeled.csv";
  cfg.schema = "schema.json";
  cfg.out_dir = "out";
  cfg.seed = o.spec.seed;
  write_file_atomic(dir / "config.json", cfg.to_json());
  out << "synth: " << data.labeled.size() << " labeled / " << data.unlabeled.size()
      << " unlabeled rows -> " << path_text(dir)
      << "/{schema.json, labeled.csv, unlabeled.csv, config.json}\n";
}

void print_error(std::ostream& err, std::string_view command, std::string_view kind,
                 const std::string& message, const std::vector<std::string>& violations) {
  ojson j;
  j["status"] = "error";
  j["command"] = command;
  j["kind"] = kind;
  j["message"] = message;
  j["violations"] = violations;
  err << j.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gowermatch: confident Gower-similarity pseudo-labeling for tabular data"};
  app.name("gowermatch");
  app.require_subcommand(1, 1);

  std::string config_path;
  app.add_option("--config", config_path, "Run configuration (JSON)");

  // Per-command overrides of the configuration; `set` runs after loading it.
  std::vector<std::function<void(RunConfig&)>> overrides;
  auto over = [&](const std::string& flag, auto member, const std::string& help) {
    using T = std::decay_t<decltype(std::declval<RunConfig&>().*member)>;
    auto value = std::make_shared<T>();
    auto* opt = app.add_option(flag, *value, help);
    overrides.push_back([opt, value, member](RunConfig& c) {
      if (opt->count()) c.*member = *value;
    });
  };
  std::string labeled, unlabeled, schema, out_dir;
  auto path_over = [&](const std::string& flag, std::string& store,
                       fs::path RunConfig::*member, const std::string& help) {
    auto* opt = app.add_option(flag, store, help);
    overrides.push_back([opt, &store, member](RunConfig& c) {
      if (opt->count()) c.*member = store;
    });
  };
  path_over("--labeled", labeled, &RunConfig::labeled, "Labeled data (CSV)");
  path_over("--unlabeled", unlabeled, &RunConfig::unlabeled, "Unlabeled data (CSV)");
  path_over("--schema", schema, &RunConfig::schema, "Feature schema (JSON)");
  path_over("--out", out_dir, &RunConfig::out_dir, "Output directory");
  over("--fraction", &RunConfig::split_fraction, "Test fraction of the time split");
  over("--percentile", &RunConfig::percentile, "Percentile for the similarity threshold d");
  over("--budget", &RunConfig::confidence_budget, "Max fraction of unlabeled rows assigned");
  double d_value = 0, c_value = 0;
  auto* d_opt = app.add_option("--d", d_value, "Manual similarity threshold");
  auto* c_opt = app.add_option("--c", c_value, "Manual confidence threshold");
  double l1 = 0, l2 = 0;
  auto* l1_opt = app.add_option("--l1", l1, "l1 penalty");
  auto* l2_opt = app.add_option("--l2", l2, "l2 penalty");
  over("--max-iterations", &RunConfig::max_iterations, "Training iteration budget");
  over("--tolerance", &RunConfig::tolerance, "Training stopping tolerance");
  over("--features", &RunConfig::features, "Model features (default: all)");
  over("--class-threshold", &RunConfig::class_threshold, "Score binarization threshold");
  over("--seed", &RunConfig::seed, "Random seed");
  std::string base_id, fx, fy;
  std::vector<std::string> vary;
  double shell_d = 0;
  std::size_t x_count = 0, y_count = 0, count = 0;
  bool augmented_model = false;
  auto* base_opt = app.add_option("--base-id", base_id, "Probe base sample id");
  auto* fx_opt = app.add_option("--fx", fx, "Grid x feature");
  auto* fy_opt = app.add_option("--fy", fy, "Grid y feature");
  auto* xn_opt = app.add_option("--x-count", x_count, "Grid x points");
  auto* yn_opt = app.add_option("--y-count", y_count, "Grid y points");
  auto* vary_opt = app.add_option("--vary", vary, "Shell features to perturb");
  auto* sd_opt = app.add_option("--shell-d", shell_d, "Shell similarity floor");
  auto* n_opt = app.add_option("--count", count, "Shell sample count");
  auto* am_opt = app.add_flag("--augmented-model", augmented_model,
                              "Probe the model trained with similar rows");
  std::size_t workers = 0;
  auto* w_opt = app.add_option("--workers", workers,
                               "Worker threads (default: GOWERMATCH_WORKERS or 1)");

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(Context&);
  };
  const Command commands[] = {
      {"split", "Time-holdout split of the labeled data", cmd_split},
      {"ranges", "Feature ranges pooled over labeled and unlabeled data", cmd_ranges},
      {"calibrate", "Choose thresholds d and c", cmd_calibrate},
      {"match", "Estimate labels and features of unlabeled rows", cmd_match},
      {"augment", "Build similar datasets and the augmented train set", cmd_augment},
      {"train", "Train logistic regression, plain and augmented", cmd_train},
      {"score", "Score both test sets", cmd_score},
      {"evaluate", "AUC ROC table and McNemar comparisons", cmd_evaluate},
      {"probe-grid", "Probability grid over two features", cmd_probe_grid},
      {"probe-shell", "Similarity shell and recourse report", cmd_probe_shell},
      {"report", "Run the whole pipeline", cmd_report},
  };
  std::map<std::string, void (*)(Context&)> dispatch;
  for (const auto& c : commands) {
    app.add_subcommand(c.name, c.help)->fallthrough();
    dispatch[c.name] = c.fn;
  }
  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic two-cluster fixture");
  synth_cmd->add_option("--dir", synth.out, "Fixture directory")->required();
  synth_cmd->add_option("--seed", synth.spec.seed, "Random seed");
  synth_cmd->add_option("--labeled-per-cluster", synth.spec.labeled_per_cluster);
  synth_cmd->add_option("--unlabeled-per-cluster", synth.spec.unlabeled_per_cluster);
  synth_cmd->add_option("--features", synth.spec.similarity_features,
                        "Similarity features");
  synth_cmd->add_option("--separation", synth.spec.separation,
                        "Center distance in standard deviations");
  synth_cmd->add_option("--label-noise", synth.spec.label_noise,
                        "Probability of flipping a labeled row's label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "", "usage", e.what(), {});
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "synth") {
      cmd_synth(synth, out);
      return 0;
    }
    RunConfig cfg;
    if (!config_path.empty()) {
      const fs::path p = config_path;
      cfg = RunConfig::from_json(read_text_file(p), p.parent_path());
    }
    if (cfg.out_dir.empty()) {
      const char* env = std::getenv("GOWERMATCH_OUT");
      cfg.out_dir = env && *env ? env : "out";
    }
    for (auto& f : overrides) f(cfg);
    if (d_opt->count()) cfg.d = d_value;
    if (c_opt->count()) cfg.c = c_value;
    if (l1_opt->count()) cfg.regularization.l1 = l1;
    if (l2_opt->count()) cfg.regularization.l2 = l2;
    if (base_opt->count()) cfg.probe.base_id = base_id;
    if (fx_opt->count()) cfg.probe.feature_x = fx;
    if (fy_opt->count()) cfg.probe.feature_y = fy;
    if (xn_opt->count()) cfg.probe.x_count = x_count;
    if (yn_opt->count()) cfg.probe.y_count = y_count;
    if (vary_opt->count()) cfg.probe.vary = vary;
    if (sd_opt->count()) cfg.probe.d = shell_d;
    if (n_opt->count()) cfg.probe.count = count;
    if (am_opt->count()) cfg.probe.augmented_model = augmented_model;
    cfg.workers = w_opt->count() ? workers : default_workers();
    validate(cfg);
    Context ctx(std::move(cfg), out);
    dispatch.at(command)(ctx);
    return 0;
  } catch (const ValidationError& e) {
    print_error(err, command, "validation", e.what(), e.violations());
  } catch (const MissingArtifact& e) {
    print_error(err, command, "missing_artifact", e.what(), {});
  } catch (const std::exception& e) {
    print_error(err, command, "error", e.what(), {});
  }
  return 1;
}

}  // namespace gowermatch::cli
