// Copyright 2026 The Shapscan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shapscan/imaging.hpp"
#include "shapscan/shapley.hpp"

namespace shapscan::cli {

/// Explain one tabular instance against a CSV background.
struct ExplainOptions {
  std::string data_path;
  /// CSV with the same header as the data file; row query_row is explained.
  std::string query_path;
  std::size_t query_row = 0;
  /// When set, row data_row of the data file is the query instead.
  std::optional<std::size_t> data_row;
  std::string model_path;
  /// Defaults to ceil(m/2), the exact regime.
  std::optional<int> chi;
  std::string output_path;
  shapley::EvalOptions eval;
};

/// Returns {phi0, phis, prediction, chi, m, n, coalition_count, features}
/// and writes it to output_path when non-empty.
nlohmann::json run_explain(const ExplainOptions& options);

/// Accuracy sweep of the depth-limited estimator against exact enumeration.
struct BenchmarkOptions {
  /// linear, interaction or piecewise.
  std::string family = "interaction";
  std::size_t m = 8;
  std::size_t n = 16;
  std::vector<int> chis;  // empty: 1..ceil(m/2)
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  std::string output_path;
  /// Adds a wall_ms column; the CSV is then no longer repeatable.
  bool timing = false;
};

inline constexpr std::size_t kMaxBenchmarkFeatures = 14;

/// Returns the CSV text:
///   chi,trial,m,n,coalition_count,mae,max_abs_error[,wall_ms]
/// rows sorted by (chi, trial), each chi group closed by a trial=mean row.
std::string run_benchmark(const BenchmarkOptions& options);

/// Explain image regions and write heatmaps.
struct ImageExplainOptions {
  std::string image_path;
  /// Explicit region; when absent every detection is explained.
  std::optional<imaging::Region> region;
  imaging::DetectorConfig detector;
  int gx = 4;
  int gy = 4;
  std::optional<int> chi;
  /// "blur", "blur:<sigma>", "uniform:<value>".
  std::string background = "blur";
  /// Predictor spec file; default is a threshold-blob model of arity gx*gy.
  std::string model_path;
  /// Writes <prefix><k>.pgm and <prefix><k>.json per explained region.
  std::string output_prefix;
  shapley::EvalOptions eval;
};

nlohmann::json run_explain_image(const ImageExplainOptions& options);

imaging::BackgroundSpec parse_background(const std::string& text);
imaging::Region parse_region(const std::string& text);

}  // namespace shapscan::cli
