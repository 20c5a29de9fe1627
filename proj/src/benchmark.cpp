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
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "shapscan/cli.hpp"
#include "shapscan/error.hpp"
#include "shapscan/synthetic.hpp"

namespace shapscan::cli {

namespace {

struct Row {
  int chi;
  std::size_t trial;
  std::uint64_t coalitions;
  double mae;
  double max_abs;
  double wall_ms;
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string run_benchmark(const BenchmarkOptions& opt) {
  if (opt.m < 1) throw ParameterError("benchmark needs m >= 1");
  if (opt.m > kMaxBenchmarkFeatures) {
    throw CapacityError("benchmark m = " + std::to_string(opt.m) + " exceeds " +
                        std::to_string(kMaxBenchmarkFeatures) + ", the exact reference would be too slow");
  }
  if (opt.n < 1) throw ParameterError("benchmark needs n >= 1");
  if (opt.trials < 1) throw ParameterError("benchmark needs at least one trial");
  std::vector<int> chis = opt.chis;
  if (chis.empty()) {
    for (int c = 1; c <= shapley::Depth::saturating(opt.m).value(); ++c) chis.push_back(c);
  }
  std::sort(chis.begin(), chis.end());
  chis.erase(std::unique(chis.begin(), chis.end()), chis.end());
  for (int c : chis) shapley::Depth(c).check(opt.m);

  shapley::EvalOptions eval;
  eval.max_background = std::max<std::size_t>(opt.n, 1);

  std::vector<Row> rows;
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    synthetic::Rng rng(synthetic::derive_seed(opt.seed, trial));
    const auto model = synthetic::random_model(opt.family, opt.m, rng);
    const shapley::Dataset data(synthetic::random_matrix(opt.n, opt.m, rng));
    const shapley::Query query(synthetic::random_vector(opt.m, rng));
    const auto exact = shapley::exact_shapley(data, query, *model, eval);
    for (int c : chis) {
      const shapley::Depth chi(c);
      const auto t0 = std::chrono::steady_clock::now();
      const auto approx = shapley::hypershap(data, query, *model, chi, eval);
      const auto t1 = std::chrono::steady_clock::now();
      double sum = 0.0, worst = 0.0;
      for (std::size_t i = 0; i < opt.m; ++i) {
        const double err = std::abs(approx.phis[i] - exact.phis[i]);
        sum += err;
        worst = std::max(worst, err);
      }
      rows.push_back({c, trial, shapley::coalition_count(opt.m, chi), sum / static_cast<double>(opt.m), worst,
                      std::chrono::duration<double, std::milli>(t1 - t0).count()});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::pair(a.chi, a.trial) < std::pair(b.chi, b.trial);
  });

  std::ostringstream out;
  out << "chi,trial,m,n,coalition_count,mae,max_abs_error" << (opt.timing ? ",wall_ms" : "") << "\n";
  auto emit = [&](int chi, const std::string& trial, std::uint64_t c, double mae, double worst, double ms) {
    out << chi << "," << trial << "," << opt.m << "," << opt.n << "," << c << "," << g17(mae) << ","
        << g17(worst);
    if (opt.timing) out << "," << g17(ms);
    out << "\n";
  };
  for (std::size_t k = 0; k < rows.size();) {
    const int chi = rows[k].chi;
    double mae = 0.0, worst = 0.0, ms = 0.0;
    std::size_t count = 0;
    for (; k < rows.size() && rows[k].chi == chi; ++k, ++count) {
      const auto& r = rows[k];
      emit(r.chi, std::to_string(r.trial), r.coalitions, r.mae, r.max_abs, r.wall_ms);
      mae += r.mae;
      worst += r.max_abs;
      ms += r.wall_ms;
    }
    emit(chi, "mean", rows[k - 1].coalitions, mae / count, worst / count, ms / count);
  }

  const std::string text = out.str();
  if (!opt.output_path.empty()) {
    std::ofstream f(opt.output_path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + opt.output_path + "'");
    f << text;
    if (!f.flush()) throw Error("short write to '" + opt.output_path + "'");
  }
  return text;
}

}  // namespace shapscan::cli
