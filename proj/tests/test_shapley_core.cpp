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
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "shapscan/error.hpp"
#include "shapscan/model.hpp"
#include "shapscan/shapley.hpp"
#include "shapscan/synthetic.hpp"

using namespace shapscan;
using namespace shapscan::shapley;

namespace {

Dataset make_data(const std::vector<std::vector<double>>& rows) { return Dataset(Matrix::from_rows(rows)); }

std::vector<std::vector<double>> to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  return rows;
}

FunctionPredictor fn(std::size_t m, FunctionPredictor::Fn f) { return FunctionPredictor(m, std::move(f)); }

}  // namespace

TEST_CASE("tau substitutes query values for coalition members") {
  const std::vector<double> q{1, 2}, x{9, 9};
  CHECK(tau(q, x, std::vector<std::uint8_t>{1, 0}) == std::vector<double>{1, 9});
  CHECK(tau(q, x, std::vector<std::uint8_t>{1, 1}) == std::vector<double>{1, 2});
  CHECK(tau(q, x, std::vector<std::uint8_t>{0, 0}) == std::vector<double>{9, 9});
  CHECK_THROWS_AS(tau(q, std::vector<double>{1}, std::vector<std::uint8_t>{1, 0}), DimensionError);
}

TEST_CASE("expected_values") {
  const auto data = make_data({{0, 0}, {2, 0}, {4, 6}});
  const Query q({1, 1});
  const auto sum = fn(2, [](std::span<const double> x) { return x[0] + x[1]; });

  SUBCASE("empty coalition averages the background") {
    const SelectionMatrix z(2, {0, 0});
    CHECK(expected_values(data, q, sum, z).mu[0] == doctest::Approx((0.0 + 2.0 + 10.0) / 3.0));
  }
  SUBCASE("full coalition is f(q)") {
    const SelectionMatrix z(2, {1, 1});
    CHECK(expected_values(data, q, sum, z).mu[0] == 2.0);
  }
  SUBCASE("hand-evaluated composites") {
    // f(1,0) twice -> 1.0
    const auto two = make_data({{0, 0}, {2, 0}});
    const SelectionMatrix z(2, {1, 0});
    CHECK(expected_values(two, q, sum, z).mu[0] == 1.0);
  }
  SUBCASE("model failures carry the coalition row") {
    const auto bad = fn(2, [](std::span<const double> x) -> double {
      if (x[0] == 1 && x[1] == 0) throw std::runtime_error("boom");
      return 0;
    });
    const SelectionMatrix z(2, {0, 0, 1, 0});
    EvalOptions opt;
    opt.coalitions_per_batch = 1;
    try {
      expected_values(data, q, bad, z, opt);
      FAIL("expected a PredictorError");
    } catch (const PredictorError& e) {
      CHECK(std::string(e.what()).find("coalition rows 1..1") != std::string::npos);
      CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
  }
  SUBCASE("non-finite predictions are rejected") {
    const auto nan = fn(2, [](std::span<const double>) { return std::nan(""); });
    CHECK_THROWS_AS(expected_values(data, q, nan, SelectionMatrix(2, {1, 1})), PredictorError);
  }
  SUBCASE("budget guard") {
    EvalOptions opt;
    opt.evaluation_budget = 5;
    CHECK_THROWS_AS(expected_values(data, q, sum, SelectionMatrix(2, {0, 0, 1, 1}), opt), CapacityError);
  }
}

TEST_CASE("dataset and query validation") {
  CHECK_THROWS_AS(Dataset{Matrix{}}, ParameterError);
  CHECK_THROWS_AS(make_data({{1, std::nan("")}}), ParameterError);
  CHECK_THROWS_AS(Query(std::vector<double>{}), ParameterError);
  CHECK_THROWS_AS(Query({INFINITY}), ParameterError);
  CHECK_THROWS_AS(Depth(0), ParameterError);
  CHECK_THROWS_AS(Depth(3).check(2), ParameterError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), DimensionError);

  const auto d = make_data({{1}, {2}});
  const auto f = fn(1, [](std::span<const double> x) { return x[0]; });
  CHECK_THROWS_AS(hypershap(d, Query({1, 2}), f, Depth(1)), DimensionError);
  const auto f2 = fn(2, [](std::span<const double> x) { return x[0]; });
  CHECK_THROWS_AS(hypershap(d, Query({1}), f2, Depth(1)), DimensionError);
}

TEST_CASE("build_selection_matrix sizes and order") {
  CHECK(build_selection_matrix(5, Depth(1)).c() == 12);
  CHECK(build_selection_matrix(4, Depth(2)).c() == 16);

  const auto a = build_selection_matrix(3, Depth(3));
  const auto b = build_selection_matrix(3, Depth(2));
  REQUIRE(a.c() == 8);
  REQUIRE(b.c() == 8);
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::equal(a.row(j).begin(), a.row(j).end(), b.row(j).begin()));
  }

  // Ascending size, then lexicographic member sets: {}, {0}, {1}, {2}, {0,1}, ...
  const auto z = build_selection_matrix(3, Depth(2));
  const std::vector<std::vector<std::uint8_t>> expect = {
      {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::vector<std::uint8_t>(z.row(j).begin(), z.row(j).end()) == expect[j]);
  }

  CHECK(coalition_count(8, Depth(1)) == 18);
  CHECK_THROWS_AS(build_selection_matrix(4, Depth(5)), ParameterError);
  CHECK_THROWS_AS(build_selection_matrix(30, Depth(15), 1000), CapacityError);
  CHECK(coalition_count(200, Depth(100)) == UINT64_MAX);
}

TEST_CASE("selection matrix rows are distinct and sized within the band") {
  for (std::size_t m = 1; m <= 9; ++m) {
    for (int chi = 1; chi <= static_cast<int>(m); ++chi) {
      const auto z = build_selection_matrix(m, Depth(chi));
      std::vector<std::uint32_t> masks;
      for (std::size_t j = 0; j < z.c(); ++j) {
        std::uint32_t mask = 0;
        for (std::size_t k = 0; k < m; ++k) mask |= std::uint32_t{z.row(j)[k]} << k;
        masks.push_back(mask);
        const auto size = z.row_size(j);
        CHECK((size <= static_cast<std::size_t>(chi) || size + chi >= m));
      }
      std::sort(masks.begin(), masks.end());
      CHECK(std::adjacent_find(masks.begin(), masks.end()) == masks.end());
    }
  }
}

TEST_CASE("shapley_weight matches exact rational arithmetic") {
  CHECK(shapley_weight(4, Depth(1), 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(oracle::depth_weight(4, 1, 0) == oracle::Rational{1, 2});
  CHECK(shapley_weight(4, Depth(1), 1) == 0.0);
  CHECK(shapley_weight(4, Depth(2), 1) == doctest::Approx(1.0 / 12.0).epsilon(1e-15));
  CHECK(oracle::depth_weight(4, 2, 1) == oracle::Rational{1, 12});
  CHECK_THROWS_AS(shapley_weight(4, Depth(1), 4), ParameterError);
  CHECK_THROWS_AS(shapley_weight(4, Depth(5), 0), ParameterError);

  for (std::uint64_t m = 1; m <= 18; ++m) {
    for (std::uint64_t chi = 1; chi <= m; ++chi) {
      for (std::uint64_t b = 0; b < m; ++b) {
        const double expected = oracle::depth_weight(m, chi, b).to_double();
        const double got = shapley_weight(m, Depth(static_cast<int>(chi)), b);
        CHECK(std::abs(got - expected) <= 1e-15 * std::max(1.0, expected));
      }
    }
  }
}

TEST_CASE("weights normalize to one") {
  for (std::size_t m = 1; m <= 64; ++m) {
    for (int chi = 1; chi <= static_cast<int>(m); ++chi) {
      double total = 0.0;
      for (std::size_t b = 0; b < m; ++b) total += binomial(m - 1, b) * shapley_weight(m, Depth(chi), b);
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("hypershap examples") {
  SUBCASE("two-feature linear model") {
    const auto data = make_data({{0, 0}});
    const auto f = fn(2, [](std::span<const double> x) { return x[0] + 2 * x[1]; });
    const auto a = hypershap(data, Query({1, 1}), f, Depth(1));
    CHECK(a.phis[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.phis[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(a.phi0) < 1e-12);
    CHECK(a.prediction == 3.0);
  }
  SUBCASE("ignored features get zero at every depth") {
    synthetic::Rng rng(7);
    const Dataset data(synthetic::random_matrix(5, 3, rng));
    const Query q(synthetic::random_vector(3, rng));
    const auto f = fn(3, [](std::span<const double> x) { return std::sin(3 * x[0]) + x[0] * x[0]; });
    for (int chi = 1; chi <= 3; ++chi) {
      const auto a = hypershap(data, q, f, Depth(chi));
      CHECK(std::abs(a.phis[1]) <= 1e-12);
      CHECK(std::abs(a.phis[2]) <= 1e-12);
    }
    const auto e = exact_shapley(data, q, f);
    CHECK(std::abs(e.phis[1]) <= 1e-12);
    CHECK(std::abs(e.phis[2]) <= 1e-12);
  }
  SUBCASE("single feature") {
    const auto data = make_data({{1}, {3}});
    const auto f = fn(1, [](std::span<const double> x) { return x[0] * x[0]; });
    const auto a = hypershap(data, Query({4}), f, Depth(1));
    CHECK(a.phis[0] == doctest::Approx(16.0 - 5.0));
    CHECK(a.phi0 == doctest::Approx(5.0));
  }
}

TEST_CASE("exact_shapley examples") {
  SUBCASE("additive closed form at m=4") {
    synthetic::Rng rng(11);
    const auto lm = synthetic::random_linear(4, rng);
    const Dataset data(synthetic::random_matrix(6, 4, rng));
    const Query q(synthetic::random_vector(4, rng));
    const model::LinearPredictor f(lm.weights, lm.intercept);
    const auto a = exact_shapley(data, q, f);
    const auto means = data.column_means();
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.phis[i] == doctest::Approx(lm.weights[i] * (q[i] - means[i])).epsilon(1e-12));
    const auto perm = oracle::permutation_shapley(to_rows(data.matrix()), {q.values().begin(), q.values().end()},
                                                  [&](std::span<const double> x) { return f.predict_one(x); });
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a.phis[i] - perm[i]) < 1e-12);
  }
  SUBCASE("constant model") {
    const auto data = make_data({{1, 2, 3}, {4, 5, 6}});
    const auto f = fn(3, [](std::span<const double>) { return 2.5; });
    const auto a = exact_shapley(data, Query({0, 0, 0}), f);
    for (double phi : a.phis) CHECK(phi == 0.0);
    CHECK(a.phi0 == 2.5);
  }
  SUBCASE("product under symmetric background") {
    // v({}) = 2, v({1}) = v({2}) = 1, v({1,2}) = 1  =>  phi = (-1/2, -1/2), phi0 = 2
    const auto data = make_data({{0, 0}, {2, 2}});
    const model::ProductPredictor f(2);
    const auto a = exact_shapley(data, Query({1, 1}), f);
    CHECK(a.phis[0] == doctest::Approx(-0.5));
    CHECK(a.phis[1] == doctest::Approx(-0.5));
    CHECK(a.phi0 == doctest::Approx(2.0));
    const auto perm = oracle::permutation_shapley({{0, 0}, {2, 2}}, {1, 1},
                                                  [](std::span<const double> x) { return x[0] * x[1]; });
    CHECK(a.phis[0] == doctest::Approx(perm[0]));
  }
  SUBCASE("capacity guard") {
    const Dataset data(Matrix(1, 21));
    const auto f = fn(21, [](std::span<const double>) { return 0.0; });
    CHECK_THROWS_AS(exact_shapley(data, Query(std::vector<double>(21, 0.0)), f), CapacityError);
  }
}

TEST_CASE("saturated depth matches the permutation oracle") {
  synthetic::Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng.integer(0, 6);
    const std::size_t n = 1 + rng.integer(0, 5);
    const auto model = synthetic::random_model(trial % 2 ? "interaction" : "piecewise", m, rng);
    const Matrix bg = synthetic::random_matrix(n, m, rng);
    const auto qv = synthetic::random_vector(m, rng);
    const auto a = hypershap(Dataset(bg), Query(qv), *model, Depth::saturating(m));
    const auto perm = oracle::permutation_shapley(to_rows(bg), qv, [&](std::span<const double> x) { return model->predict_one(x); });
    for (std::size_t i = 0; i < m; ++i) CHECK(std::abs(a.phis[i] - perm[i]) <= 1e-9);
    // phi0 is the mean prediction in the exact regime.
    CHECK(a.phi0 == doctest::Approx(oracle::coalition_value(to_rows(bg), qv, [&](std::span<const double> x) { return model->predict_one(x); }, 0)));
  }
}

TEST_CASE("efficiency holds at every depth") {
  synthetic::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.integer(0, 8);
    const auto model = synthetic::random_model("piecewise", m, rng);
    const Dataset data(synthetic::random_matrix(4, m, rng));
    const Query q(synthetic::random_vector(m, rng));
    for (int chi = 1; chi <= static_cast<int>(m); ++chi) {
      const auto a = hypershap(data, q, *model, Depth(chi));
      const double total = std::accumulate(a.phis.begin(), a.phis.end(), a.phi0);
      CHECK(std::abs(total - a.prediction) <= 1e-12 * std::max(1.0, std::abs(a.prediction)));
    }
  }
}

TEST_CASE("background subsampling is a deterministic stride") {
  Matrix rows;
  for (int i = 0; i < 10; ++i) rows.push_row(std::vector<double>{double(i)});
  const auto sub = subsample_background(Dataset(rows), 4);
  REQUIRE(sub.n() == 4);
  CHECK(sub.row(0)[0] == 0);
  CHECK(sub.row(1)[0] == 2);
  CHECK(sub.row(2)[0] == 5);
  CHECK(sub.row(3)[0] == 7);
  CHECK(subsample_background(Dataset(rows), 20).n() == 10);

  EvalOptions cap;
  cap.max_background = 4;
  const auto f = fn(1, [](std::span<const double> x) { return x[0]; });
  const auto a = hypershap(Dataset(rows), Query({9}), f, Depth(1), cap);
  CHECK(a.phi0 == doctest::Approx((0 + 2 + 5 + 7) / 4.0));
}

TEST_CASE("threaded evaluation is bit-identical") {
  synthetic::Rng rng(99);
  const auto model = synthetic::random_model("interaction", 9, rng);
  const Dataset data(synthetic::random_matrix(20, 9, rng));
  const Query q(synthetic::random_vector(9, rng));
  EvalOptions serial, parallel;
  serial.coalitions_per_batch = 7;
  parallel.coalitions_per_batch = 3;
  parallel.threads = 4;
  for (int chi = 1; chi <= 5; ++chi) {
    const auto a = hypershap(data, q, *model, Depth(chi), serial);
    const auto b = hypershap(data, q, *model, Depth(chi), parallel);
    CHECK(a == b);
  }
}
