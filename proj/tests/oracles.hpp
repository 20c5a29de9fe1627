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

// Reference computations used only by tests. None of these call into the
// shapley module: coalition values are evaluated directly and Shapley values
// come from averaging marginal contributions over every feature ordering.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace oracle {

using Fn = std::function<double(std::span<const double>)>;

/// Interventional coalition value: mean over background rows of f with the
/// members of \p mask taken from q.
inline double coalition_value(const std::vector<std::vector<double>>& background,
                              const std::vector<double>& q, const Fn& f, std::uint32_t mask) {
  double sum = 0.0;
  std::vector<double> x(q.size());
  for (const auto& row : background) {
    for (std::size_t i = 0; i < q.size(); ++i) x[i] = (mask >> i) & 1u ? q[i] : row[i];
    sum += f(x);
  }
  return sum / static_cast<double>(background.size());
}

/// Shapley values by enumerating all m! orderings (m <= 8).
inline std::vector<double> permutation_shapley(const std::vector<std::vector<double>>& background,
                                               const std::vector<double>& q, const Fn& f) {
  const std::size_t m = q.size();
  std::vector<double> value(std::size_t{1} << m);
  for (std::uint32_t mask = 0; mask < value.size(); ++mask) value[mask] = coalition_value(background, q, f, mask);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(m, 0.0);
  std::size_t count = 0;
  do {
    std::uint32_t mask = 0;
    for (auto i : order) {
      const std::uint32_t next = mask | (1u << i);
      phi[i] += value[next] - value[mask];
      mask = next;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= static_cast<double>(count);
  return phi;
}

/// Exact non-negative rational p/q.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational make(std::uint64_t n, std::uint64_t d) {
    const auto g = std::gcd(n, d);
    return {n / g, d / g};
  }
  Rational operator*(const Rational& o) const {
    const auto g1 = std::gcd(num, o.den), g2 = std::gcd(o.num, den);
    return make((num / g1) * (o.num / g2), (den / g2) * (o.den / g1));
  }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

inline std::uint64_t factorial(std::uint64_t k) {
  std::uint64_t f = 1;
  for (std::uint64_t i = 2; i <= k; ++i) f *= i;
  return f;
}

/// Depth-limited weight b!(m-b-1)!/m! [* m/(2 chi)] as an exact fraction,
/// following the piecewise definition literally (m <= 20).
inline Rational depth_weight(std::uint64_t m, std::uint64_t chi, std::uint64_t b) {
  const bool allowed = b + 1 <= chi || b + chi >= m;
  if (!allowed) return {0, 1};
  Rational w = Rational::make(factorial(b) * factorial(m - b - 1), factorial(m));
  if (chi < (m + 1) / 2) w = w * Rational::make(m, 2 * chi);
  return w;
}

/// C(n, k) by Pascal's triangle.
inline std::uint64_t pascal(std::size_t n, std::size_t k) {
  std::vector<std::uint64_t> row(n + 1, 0);
  row[0] = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = i; j > 0; --j) row[j] += row[j - 1];
  }
  return k <= n ? row[k] : 0;
}

}  // namespace oracle
