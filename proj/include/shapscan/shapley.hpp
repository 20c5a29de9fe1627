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

// Interventional Shapley attribution for arbitrary real-valued models: exact
// enumeration over all coalitions and the deterministic depth-limited
// approximation (HyperSHAP), which keeps only coalitions whose size is at
// most chi or at least m - chi.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shapscan/matrix.hpp"
#include "shapscan/predictor.hpp"

namespace shapscan::shapley {

/// Background observations supplying replacement values for features that
/// are absent from a coalition. n >= 1 rows, m >= 1 columns, all finite.
class Dataset {
 public:
  explicit Dataset(Matrix rows);

  std::size_t n() const { return rows_.rows(); }
  std::size_t m() const { return rows_.cols(); }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  const Matrix& matrix() const { return rows_; }

  /// Column means, accumulated in ascending row order.
  std::vector<double> column_means() const;

 private:
  Matrix rows_;
};

/// The instance being explained.
class Query {
 public:
  explicit Query(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

/// Approximation depth chi. Validated against m where it is used.
class Depth {
 public:
  explicit Depth(int chi);

  int value() const { return chi_; }

  /// Throws ParameterError unless 1 <= chi <= m.
  void check(std::size_t m) const;

  /// The smallest depth at which the coalition set is complete, ceil(m/2).
  static Depth saturating(std::size_t m);

 private:
  int chi_;
};

/// Binary coalition matrix; row j is z with z[i] = 1 iff feature i takes the
/// query value. Rows are distinct.
class SelectionMatrix {
 public:
  SelectionMatrix(std::size_t m, std::vector<std::uint8_t> bits);

  std::size_t c() const { return m_ == 0 ? 0 : bits_.size() / m_; }
  std::size_t m() const { return m_; }
  std::span<const std::uint8_t> row(std::size_t j) const {
    return {bits_.data() + j * m_, m_};
  }
  std::size_t row_size(std::size_t j) const;

 private:
  std::size_t m_;
  std::vector<std::uint8_t> bits_;
};

/// One expected prediction per SelectionMatrix row.
struct ExpectationVector {
  std::vector<double> mu;
};

/// phi0 + sum(phis) == prediction by construction.
struct Attribution {
  double phi0 = 0.0;
  std::vector<double> phis;
  double prediction = 0.0;

  bool operator==(const Attribution&) const = default;
};

/// Knobs shared by the expectation, exact and approximate routes.
struct EvalOptions {
  /// Background rows beyond this cap are stride-subsampled.
  std::size_t max_background = 256;
  /// Upper bound on c * n model evaluations.
  std::uint64_t evaluation_budget = 10'000'000;
  /// Worker threads for model evaluation (only used when the predictor
  /// reports concurrent()). Results do not depend on this value.
  unsigned threads = 1;
  /// Coalitions per predict() call.
  std::size_t coalitions_per_batch = 64;
};

/// Largest m accepted by exact_shapley.
inline constexpr std::size_t kMaxExactFeatures = 20;

/// Returns q[i] where z[i] = 1, x[i] otherwise.
std::vector<double> tau(std::span<const double> q, std::span<const double> x,
                        std::span<const std::uint8_t> z);

/// mu[j] = mean over background rows i (ascending) of f(tau(q, X_i, Z_j)).
/// Throws CapacityError when c * n exceeds the evaluation budget.
ExpectationVector expected_values(const Dataset& data, const Query& query,
                                  const Predictor& model,
                                  const SelectionMatrix& selection,
                                  const EvalOptions& options = {});

/// Number of distinct coalitions with size in {0..chi} U {m-chi..m}.
/// Saturates at UINT64_MAX.
std::uint64_t coalition_count(std::size_t m, const Depth& chi);

/// All coalitions with size in {0..chi} U {m-chi..m}, each once, ordered by
/// size and then lexicographically by member index set. Throws
/// CapacityError when the row count exceeds \p max_rows.
SelectionMatrix build_selection_matrix(std::size_t m, const Depth& chi,
                                       std::uint64_t max_rows = 10'000'000);

/// Weight applied to a marginal contribution whose coalition (excluding the
/// feature) has size b. Zero outside the band chi-1 < b < m-chi. Within the
/// band the Shapley kernel 1/(m C(m-1,b)) is rescaled by m/(2 chi) when
/// chi < ceil(m/2).
double shapley_weight(std::size_t m, const Depth& chi, std::size_t b);

/// Depth-limited deterministic Shapley approximation.
Attribution hypershap(const Dataset& data, const Query& query,
                      const Predictor& model, const Depth& chi,
                      const EvalOptions& options = {});

/// Exact Shapley values by enumerating all 2^m coalitions (m <= 20).
Attribution exact_shapley(const Dataset& data, const Query& query,
                          const Predictor& model,
                          const EvalOptions& options = {});

/// Deterministic stride subsample: keeps rows floor(k * n / cap), k < cap.
Dataset subsample_background(const Dataset& data, std::size_t cap);

/// n choose k in double precision via the multiplicative recurrence.
double binomial(std::size_t n, std::size_t k);

}  // namespace shapscan::shapley
