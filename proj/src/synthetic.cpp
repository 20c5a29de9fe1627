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
#include "shapscan/synthetic.hpp"

#include <algorithm>
#include <memory>

#include "shapscan/error.hpp"
#include "shapscan/model.hpp"

namespace shapscan::synthetic {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  // splitmix64 finalizer over seed + k * golden ratio increment.
  std::uint64_t z = seed + (k + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LinearModel random_linear(std::size_t m, Rng& rng) {
  LinearModel lm;
  lm.weights = random_vector(m, rng);
  lm.intercept = rng.uniform(-1.0, 1.0);
  return lm;
}

Matrix random_matrix(std::size_t n, std::size_t m, Rng& rng, double lo, double hi) {
  Matrix out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) out(r, c) = rng.uniform(lo, hi);
  }
  return out;
}

std::vector<double> random_vector(std::size_t m, Rng& rng, double lo, double hi) {
  std::vector<double> v(m);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

PredictorRef random_model(const std::string& family, std::size_t m, Rng& rng) {
  if (m == 0) throw ParameterError("model arity must be at least 1");
  if (family == "linear") {
    auto lm = random_linear(m, rng);
    return std::make_shared<model::LinearPredictor>(std::move(lm.weights), lm.intercept);
  }
  if (family == "interaction") {
    auto lm = random_linear(m, rng);
    std::vector<double> pair(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) pair[i * m + j] = rng.uniform(-0.5, 0.5);
    }
    return std::make_shared<FunctionPredictor>(
        m,
        [lm = std::move(lm), pair = std::move(pair), m](std::span<const double> x) {
          double y = lm.intercept;
          for (std::size_t i = 0; i < m; ++i) y += lm.weights[i] * x[i];
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) y += pair[i * m + j] * x[i] * x[j];
          }
          return y;
        },
        "interaction(m=" + std::to_string(m) + ")");
  }
  if (family == "piecewise") {
    constexpr std::size_t kHidden = 8;
    auto w = random_vector(kHidden * m, rng);
    auto c = random_vector(kHidden, rng);
    auto a = random_vector(kHidden, rng);
    return std::make_shared<FunctionPredictor>(
        m,
        [w = std::move(w), c = std::move(c), a = std::move(a), m](std::span<const double> x) {
          double y = 0.0;
          for (std::size_t k = 0; k < kHidden; ++k) {
            double h = c[k];
            for (std::size_t i = 0; i < m; ++i) h += w[k * m + i] * x[i];
            y += a[k] * std::max(0.0, h);
          }
          return y;
        },
        "piecewise(m=" + std::to_string(m) + ")");
  }
  throw ParameterError("unknown model family '" + family + "' (linear, interaction, piecewise)");
}

}  // namespace shapscan::synthetic
