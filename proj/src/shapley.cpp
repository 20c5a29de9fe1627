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
#include "shapscan/shapley.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "shapscan/error.hpp"

namespace shapscan::shapley {

namespace {

__extension__ typedef unsigned __int128 u128;

std::string str(std::size_t v) { return std::to_string(v); }

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ParameterError(std::string(what) + " entry " + str(i) + " is not finite");
    }
  }
}

void check_dims(const Dataset& data, const Query& query, const Predictor& model) {
  if (query.size() != data.m()) {
    throw DimensionError("query has " + str(query.size()) + " features, dataset has " +
                         str(data.m()));
  }
  if (model.arity() != data.m()) {
    throw DimensionError("model " + model.describe() + " expects " + str(model.arity()) +
                         " features, dataset has " + str(data.m()));
  }
}

// Exact C(n, k) with saturation at UINT64_MAX. Every prefix of the
// multiplicative recurrence is itself a binomial, so the division is exact.
std::uint64_t binomial_u64(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 acc = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
  }
  return static_cast<std::uint64_t>(acc);
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const auto max = std::numeric_limits<std::uint64_t>::max();
  return a > max - b ? max : a + b;
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  const auto max = std::numeric_limits<std::uint64_t>::max();
  if (a != 0 && b > max / a) return max;
  return a * b;
}

// Sizes k in {0..chi} U {m-chi..m}, ascending, without repeats.
std::vector<std::size_t> coalition_sizes(std::size_t m, std::size_t chi) {
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k <= m; ++k) {
    if (k <= chi || k + chi >= m) sizes.push_back(k);
  }
  return sizes;
}

void check_budget(std::uint64_t coalitions, std::size_t n, const EvalOptions& options) {
  const auto evaluations = saturating_mul(coalitions, n);
  if (evaluations > options.evaluation_budget) {
    throw CapacityError("coalitions (" + std::to_string(coalitions) + ") x background rows (" +
                        str(n) + ") exceeds the evaluation budget of " +
                        std::to_string(options.evaluation_budget) +
                        "; lower chi, the feature count or the background size");
  }
}

}  // namespace

Dataset::Dataset(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() == 0) throw ParameterError("dataset needs at least one row");
  if (rows_.cols() == 0) throw ParameterError("dataset needs at least one feature");
  require_finite(rows_.data(), "dataset");
}

std::vector<double> Dataset::column_means() const {
  std::vector<double> means(m(), 0.0);
  for (std::size_t i = 0; i < n(); ++i) {
    const auto r = row(i);
    for (std::size_t k = 0; k < m(); ++k) means[k] += r[k];
  }
  for (auto& v : means) v /= static_cast<double>(n());
  return means;
}

Query::Query(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ParameterError("query needs at least one feature");
  require_finite(values_, "query");
}

Depth::Depth(int chi) : chi_(chi) {
  if (chi < 1) throw ParameterError("approximation depth must be >= 1, got " + std::to_string(chi));
}

void Depth::check(std::size_t m) const {
  if (static_cast<std::size_t>(chi_) > m) {
    throw ParameterError("approximation depth " + std::to_string(chi_) +
                         " exceeds the feature count " + str(m));
  }
}

Depth Depth::saturating(std::size_t m) {
  return Depth(static_cast<int>((m + 1) / 2));
}

SelectionMatrix::SelectionMatrix(std::size_t m, std::vector<std::uint8_t> bits)
    : m_(m), bits_(std::move(bits)) {
  if (m_ == 0) throw ParameterError("selection matrix needs at least one column");
  if (bits_.empty() || bits_.size() % m_ != 0) {
    throw DimensionError("selection matrix storage is not a whole number of rows");
  }
  for (auto b : bits_) {
    if (b > 1) throw ParameterError("selection matrix entries must be 0 or 1");
  }
}

std::size_t SelectionMatrix::row_size(std::size_t j) const {
  std::size_t count = 0;
  for (auto b : row(j)) count += b;
  return count;
}

std::vector<double> tau(std::span<const double> q, std::span<const double> x,
                        std::span<const std::uint8_t> z) {
  if (q.size() != x.size() || q.size() != z.size()) {
    throw DimensionError("tau: query, background row and coalition lengths differ (" +
                         str(q.size()) + ", " + str(x.size()) + ", " + str(z.size()) + ")");
  }
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = z[i] ? q[i] : x[i];
  return out;
}

ExpectationVector expected_values(const Dataset& data, const Query& query,
                                  const Predictor& model, const SelectionMatrix& selection,
                                  const EvalOptions& options) {
  check_dims(data, query, model);
  if (selection.m() != data.m()) {
    throw DimensionError("selection matrix has " + str(selection.m()) +
                         " columns, dataset has " + str(data.m()));
  }
  const std::size_t c = selection.c();
  const std::size_t n = data.n();
  const std::size_t m = data.m();
  check_budget(c, n, options);

  const std::size_t per_batch = std::max<std::size_t>(1, options.coalitions_per_batch);
  const std::size_t chunks = (c + per_batch - 1) / per_batch;
  ExpectationVector result;
  result.mu.assign(c, 0.0);

  auto run_chunk = [&](std::size_t chunk) {
    const std::size_t first = chunk * per_batch;
    const std::size_t last = std::min(c, first + per_batch);
    Matrix batch((last - first) * n, m);
    for (std::size_t j = first; j < last; ++j) {
      const auto z = selection.row(j);
      for (std::size_t i = 0; i < n; ++i) {
        auto dst = batch.row((j - first) * n + i);
        const auto x = data.row(i);
        for (std::size_t k = 0; k < m; ++k) dst[k] = z[k] ? query[k] : x[k];
      }
    }
    std::vector<double> y;
    try {
      y = model.predict(batch);
    } catch (const std::exception& e) {
      throw PredictorError("model failed on coalition rows " + str(first) + ".." +
                           str(last - 1) + ": " + e.what());
    }
    if (y.size() != batch.rows()) {
      throw PredictorError("model returned " + str(y.size()) + " predictions for " +
                           str(batch.rows()) + " inputs (coalition rows " + str(first) +
                           ".." + str(last - 1) + ")");
    }
    for (std::size_t j = first; j < last; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = y[(j - first) * n + i];
        if (!std::isfinite(v)) {
          throw PredictorError("model returned a non-finite value for coalition row " +
                               str(j) + ", background row " + str(i));
        }
        sum += v;
      }
      result.mu[j] = sum / static_cast<double>(n);
    }
  };

  const unsigned workers =
      model.concurrent() ? std::min<unsigned>(std::max(1u, options.threads),
                                              static_cast<unsigned>(chunks))
                         : 1u;
  if (workers <= 1) {
    for (std::size_t chunk = 0; chunk < chunks; ++chunk) run_chunk(chunk);
    return result;
  }

  // Each chunk owns a disjoint slice of mu, so completion order is irrelevant.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t chunk = next++; chunk < chunks; chunk = next++) {
        try {
          run_chunk(chunk);
        } catch (...) {
          errors[chunk] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

std::uint64_t coalition_count(std::size_t m, const Depth& chi) {
  chi.check(m);
  std::uint64_t total = 0;
  for (auto k : coalition_sizes(m, static_cast<std::size_t>(chi.value()))) {
    total = saturating_add(total, binomial_u64(m, k));
  }
  return total;
}

SelectionMatrix build_selection_matrix(std::size_t m, const Depth& chi, std::uint64_t max_rows) {
  if (m == 0) throw ParameterError("feature count must be at least 1");
  const auto count = coalition_count(m, chi);
  if (count > max_rows) {
    throw CapacityError("selection matrix would have " + std::to_string(count) +
                        " rows, above the limit of " + std::to_string(max_rows));
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(static_cast<std::size_t>(count) * m);
  std::vector<std::size_t> members;
  for (auto k : coalition_sizes(m, static_cast<std::size_t>(chi.value()))) {
    members.resize(k);
    for (std::size_t i = 0; i < k; ++i) members[i] = i;
    while (true) {
      const auto offset = bits.size();
      bits.resize(offset + m, 0);
      for (auto idx : members) bits[offset + idx] = 1;
      // Advance to the next k-subset in lexicographic order.
      std::size_t pos = k;
      while (pos > 0 && members[pos - 1] == m - k + pos - 1) --pos;
      if (pos == 0) break;
      ++members[pos - 1];
      for (std::size_t i = pos; i < k; ++i) members[i] = members[i - 1] + 1;
    }
  }
  return SelectionMatrix(m, std::move(bits));
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double acc = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return acc;
}

double shapley_weight(std::size_t m, const Depth& chi, std::size_t b) {
  chi.check(m);
  if (m == 0 || b >= m) {
    throw ParameterError("coalition size " + str(b) + " outside [0, " +
                         (m == 0 ? std::string("-1") : str(m - 1)) + "]");
  }
  const auto depth = static_cast<std::size_t>(chi.value());
  const bool in_band = b + 1 <= depth || b + depth >= m;
  if (!in_band) return 0.0;
  // b!(m-b-1)!/m! == 1/(m C(m-1,b))
  const double kernel = 1.0 / (static_cast<double>(m) * binomial(m - 1, b));
  if (depth < (m + 1) / 2) {
    return kernel * static_cast<double>(m) / (2.0 * static_cast<double>(depth));
  }
  return kernel;
}

Dataset subsample_background(const Dataset& data, std::size_t cap) {
  if (cap == 0) throw ParameterError("background cap must be at least 1");
  if (data.n() <= cap) return data;
  Matrix rows;
  for (std::size_t k = 0; k < cap; ++k) {
    const auto idx = static_cast<std::size_t>(
        static_cast<u128>(k) * data.n() / cap);
    rows.push_row(data.row(idx));
  }
  return Dataset(std::move(rows));
}

Attribution hypershap(const Dataset& data, const Query& query, const Predictor& model,
                      const Depth& chi, const EvalOptions& options) {
  check_dims(data, query, model);
  const std::size_t m = data.m();
  chi.check(m);
  const Dataset background = subsample_background(data, options.max_background);
  check_budget(coalition_count(m, chi), background.n(), options);

  const SelectionMatrix z = build_selection_matrix(m, chi, options.evaluation_budget);
  const ExpectationVector expect = expected_values(background, query, model, z, options);

  std::vector<double> weight(m);
  for (std::size_t b = 0; b < m; ++b) weight[b] = shapley_weight(m, chi, b);
  std::vector<std::size_t> sizes(z.c());
  for (std::size_t j = 0; j < z.c(); ++j) sizes[j] = z.row_size(j);

  Attribution out;
  out.phis.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double phi = 0.0;
    for (std::size_t j = 0; j < z.c(); ++j) {
      const std::uint8_t a = z.row(j)[i];
      const std::size_t b = sizes[j] - a;
      // weight[b] is already zero outside the allowed band.
      const double v = (a ? 1.0 : -1.0) * weight[b];
      phi += v * expect.mu[j];
    }
    out.phis[i] = phi;
  }
  out.prediction = model.predict_one(query.values());
  double total = 0.0;
  for (double phi : out.phis) total += phi;
  out.phi0 = out.prediction - total;
  return out;
}

Attribution exact_shapley(const Dataset& data, const Query& query, const Predictor& model,
                          const EvalOptions& options) {
  check_dims(data, query, model);
  const std::size_t m = data.m();
  if (m > kMaxExactFeatures) {
    throw CapacityError("exact Shapley enumeration is limited to " + str(kMaxExactFeatures) +
                        " features (got " + str(m) + "); use hypershap instead");
  }
  const Dataset background = subsample_background(data, options.max_background);
  const Depth full(static_cast<int>(m));
  check_budget(std::uint64_t{1} << m, background.n(), options);

  const SelectionMatrix z = build_selection_matrix(m, full, options.evaluation_budget);
  const ExpectationVector expect = expected_values(background, query, model, z, options);

  // Row index of every coalition keyed by its bitmask.
  std::vector<std::uint32_t> index(std::size_t{1} << m);
  for (std::size_t j = 0; j < z.c(); ++j) {
    std::uint32_t mask = 0;
    const auto row = z.row(j);
    for (std::size_t k = 0; k < m; ++k) mask |= static_cast<std::uint32_t>(row[k]) << k;
    index[mask] = static_cast<std::uint32_t>(j);
  }

  // b!(m-b-1)!/m! from exact integer factorials (m <= 20 fits in 64 bits).
  std::vector<std::uint64_t> factorial(m + 1, 1);
  for (std::size_t k = 1; k <= m; ++k) factorial[k] = factorial[k - 1] * k;
  std::vector<double> weight(m);
  for (std::size_t b = 0; b < m; ++b) {
    weight[b] = static_cast<double>(static_cast<long double>(factorial[b]) *
                                    static_cast<long double>(factorial[m - b - 1]) /
                                    static_cast<long double>(factorial[m]));
  }

  Attribution out;
  out.phis.assign(m, 0.0);
  const std::uint32_t all = static_cast<std::uint32_t>((std::size_t{1} << m) - 1);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint32_t bit = std::uint32_t{1} << i;
    double phi = 0.0;
    for (std::uint32_t mask = 0; mask <= all; ++mask) {
      if (mask & bit) continue;
      const auto without = expect.mu[index[mask]];
      const auto with = expect.mu[index[mask | bit]];
      phi += weight[static_cast<std::size_t>(__builtin_popcount(mask))] * (with - without);
    }
    out.phis[i] = phi;
  }
  out.prediction = model.predict_one(query.values());
  double total = 0.0;
  for (double phi : out.phis) total += phi;
  out.phi0 = out.prediction - total;
  return out;
}

}  // namespace shapscan::shapley
