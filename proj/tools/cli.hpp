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

// Command-line front end. Kept in a library so tests can drive it in-process.

#ifndef GOWERMATCH_TOOLS_CLI_HPP_
#define GOWERMATCH_TOOLS_CLI_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gowermatch/model.hpp"

namespace gowermatch::cli {

// A score file produced outside this tool, added to the evaluation table.
struct ExternalScores {
  std::string name;
  std::filesystem::path path;
  bool augmented = false;
};

struct ProbeConfig {
  std::string base_id;  // default: first row of the test split
  bool augmented_model = false;
  // probe-grid
  std::string feature_x;
  std::string feature_y;
  std::size_t x_count = 20;
  std::size_t y_count = 30;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
  // probe-shell
  std::vector<std::string> vary;  // default: every similarity feature
  double d = 0.9;
  std::size_t count = 100;
};

struct RunConfig {
  std::filesystem::path labeled;
  std::filesystem::path unlabeled;
  std::filesystem::path schema;
  std::filesystem::path out_dir;
  double split_fraction = 0.2;
  double percentile = 0.95;
  double confidence_budget = 0.05;
  std::optional<double> d;
  std::optional<double> c;
  Regularization regularization{0.0, 0.01};
  std::size_t max_iterations = 2000;
  double tolerance = 1e-7;
  std::vector<std::string> features;  // default: every value feature
  std::vector<ExternalScores> external_scores;
  double class_threshold = 0.5;
  ProbeConfig probe;
  std::uint64_t seed = 1;
  // Execution only; never written to any output.
  std::size_t workers = 1;

  // Relative paths are resolved against base_dir.
  static RunConfig from_json(std::string_view text,
                             const std::filesystem::path& base_dir);
  std::string to_json() const;
};

// Runs one invocation (argv[0] is the program name). Returns the exit status:
// 0 on success, 1 on failure, 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gowermatch::cli

#endif  // GOWERMATCH_TOOLS_CLI_HPP_
