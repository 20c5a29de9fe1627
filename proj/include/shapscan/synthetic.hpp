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

// Seeded generators for benchmark models and data. Values come from
// std::mt19937_64, whose output sequence is fixed by the standard, mapped to
// doubles without the implementation-defined standard distributions, so a
// seed reproduces the same fixtures on every platform.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shapscan/matrix.hpp"
#include "shapscan/predictor.hpp"

namespace shapscan::synthetic {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  /// Uniform integer in [lo, hi].
  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) { return lo + engine_() % (hi - lo + 1); }

 private:
  std::mt19937_64 engine_;
};

/// Independent stream for item k of a run seeded with \p seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k);

/// Model families:
///   linear       b + sum_i w_i x_i,                  w_i, b ~ U(-1, 1)
///   interaction  linear + sum_{i<j} u_ij x_i x_j,    u_ij ~ U(-0.5, 0.5)
///   piecewise    sum_k a_k relu(W_k . x + c_k), 8 hidden units, all ~ U(-1, 1)
PredictorRef random_model(const std::string& family, std::size_t m, Rng& rng);

/// Weights of the linear family, exposed for closed-form checks.
struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
};
LinearModel random_linear(std::size_t m, Rng& rng);

/// n x m matrix with entries ~ U(lo, hi).
Matrix random_matrix(std::size_t n, std::size_t m, Rng& rng, double lo = -1.0, double hi = 1.0);
std::vector<double> random_vector(std::size_t m, Rng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace shapscan::synthetic
