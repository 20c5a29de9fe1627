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
#include <sys/wait.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "service_fixture.hpp"
#include "shapscan/cli.hpp"
#include "shapscan/csv.hpp"
#include "shapscan/error.hpp"
#include "shapscan/model.hpp"
#include "shapscan/synthetic.hpp"

using namespace shapscan;
using scenes::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_csv(const std::filesystem::path& p, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(p);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  char buf[40];
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", r[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

int run(const std::string& args) {
  const int rc = std::system((std::string(SHAPSCAN_BIN) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct Row {
  int chi;
  std::string trial;
  double mae, max_abs;
  std::uint64_t count;
};

std::vector<Row> parse_benchmark(const std::string& text) {
  const auto table = csv::parse(text);
  std::vector<Row> rows;
  for (const auto& r : table.rows) {
    rows.push_back({std::stoi(r[0]), r[1], std::stod(r[5]), std::stod(r[6]), std::stoull(r[4])});
  }
  return rows;
}

}  // namespace

TEST_CASE("csv parsing") {
  const auto t = csv::parse("a,\"b,c\"\r\n1,\"say \"\"hi\"\"\"\n");
  REQUIRE(t.header.size() == 2);
  CHECK(t.header[1] == "b,c");
  CHECK(t.rows[0][1] == "say \"hi\"");
  CHECK(t.column("b,c") == 1);
  CHECK(t.column("zzz") < 0);
  CHECK(csv::escape("x,y") == "\"x,y\"");
  CHECK_THROWS(csv::parse("a,b\n1,\"open\n"));
}

TEST_CASE("explain") {
  TempDir dir;
  synthetic::Rng rng(21);
  const std::vector<std::string> header = {"f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7"};
  const Matrix data = synthetic::random_matrix(12, 8, rng);
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < data.rows(); ++r) rows.emplace_back(data.row(r).begin(), data.row(r).end());
  const auto q = synthetic::random_vector(8, rng);
  write_csv(dir.path() / "data.csv", header, rows);
  write_csv(dir.path() / "query.csv", header, {q});

  cli::ExplainOptions opt;
  opt.data_path = (dir.path() / "data.csv").string();
  opt.query_path = (dir.path() / "query.csv").string();
  opt.output_path = (dir.path() / "out.json").string();

  SUBCASE("linear closed form") {
    const std::vector<double> w = {1.5, -2, 0.25, 0, 3, -0.5, 1, 2};
    std::ofstream(dir.path() / "lin.json") << nlohmann::json{{"kind", "linear"}, {"weights", w}, {"intercept", 0.7}}.dump();
    opt.model_path = (dir.path() / "lin.json").string();
    opt.chi = 1;
    const auto out = cli::run_explain(opt);
    const auto means = shapley::Dataset(data).column_means();
    for (std::size_t i = 0; i < 8; ++i) CHECK(out["phis"][i].get<double>() == doctest::Approx(w[i] * (q[i] - means[i])).epsilon(1e-12));
    CHECK(out["m"] == 8);
    CHECK(out["n"] == 12);
    CHECK(out["chi"] == 1);
    CHECK(out["coalition_count"] == 18);
    CHECK(nlohmann::json::parse(slurp(opt.output_path)) == out);
  }
  SUBCASE("default depth matches exact reference on m=8") {
    std::ofstream(dir.path() / "prod.json") << R"({"kind":"product","arity":8})";
    opt.model_path = (dir.path() / "prod.json").string();
    const auto out = cli::run_explain(opt);
    CHECK(out["chi"] == 4);
    CHECK(out["coalition_count"] == 256);
    const auto perm = oracle::permutation_shapley(rows, q, [](std::span<const double> x) {
      double p = 1;
      for (double v : x) p *= v;
      return p;
    });
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(out["phis"][i].get<double>() - perm[i]) <= 1e-12);
  }
  SUBCASE("missing column") {
    write_csv(dir.path() / "short.csv", {"f0", "f1", "f2", "f3", "f4", "f5", "f7"}, {{1, 2, 3, 4, 5, 6, 7}});
    std::ofstream(dir.path() / "prod.json") << R"({"kind":"product","arity":8})";
    opt.model_path = (dir.path() / "prod.json").string();
    opt.query_path = (dir.path() / "short.csv").string();
    try {
      cli::run_explain(opt);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("'f6'") != std::string::npos);
    }
  }
  SUBCASE("model arity mismatch") {
    std::ofstream(dir.path() / "prod.json") << R"({"kind":"product","arity":3})";
    opt.model_path = (dir.path() / "prod.json").string();
    CHECK_THROWS_AS(cli::run_explain(opt), DimensionError);
  }
}

TEST_CASE("benchmark") {
  cli::BenchmarkOptions opt;
  opt.m = 8;
  opt.n = 6;
  opt.trials = 3;
  opt.seed = 4;

  const auto text = cli::run_benchmark(opt);
  CHECK(text.rfind("chi,trial,m,n,coalition_count,mae,max_abs_error\n", 0) == 0);
  const auto rows = parse_benchmark(text);
  REQUIRE(rows.size() == 4 * (3 + 1));
  for (const auto& r : rows) {
    if (r.chi == 4) CHECK(r.mae <= 1e-9);
    if (r.chi == 1) CHECK(r.count == 18);
  }
  CHECK(rows[3].trial == "mean");
  CHECK(rows[0].mae <= 1e-9);  // pairwise games are already exact at depth 1
  CHECK(cli::run_benchmark(opt) == text);

  opt.family = "piecewise";
  const auto piecewise = parse_benchmark(cli::run_benchmark(opt));
  CHECK(piecewise[0].mae > 1e-6);
  CHECK(piecewise.back().mae <= 1e-9);

  opt.family = "linear";
  opt.chis = {1, 2, 3};
  for (const auto& r : parse_benchmark(cli::run_benchmark(opt))) CHECK(r.mae <= 1e-9);

  opt.m = 15;
  CHECK_THROWS_AS(cli::run_benchmark(opt), CapacityError);
  opt.m = 8;
  opt.chis = {9};
  CHECK_THROWS_AS(cli::run_benchmark(opt), ParameterError);
}

TEST_CASE("argument helpers") {
  CHECK(cli::parse_region("1,2,3,4") == imaging::Region{1, 2, 3, 4});
  CHECK_THROWS_AS(cli::parse_region("1,2,3"), ParameterError);
  CHECK(cli::parse_background("uniform:0.2").kind == imaging::BackgroundSpec::Kind::uniform);
  CHECK(cli::parse_background("blur:3").blur_sigma == 3.0);
  CHECK_THROWS_AS(cli::parse_background("noise"), ParameterError);
}

TEST_CASE("explain-image") {
  TempDir dir;
  const auto img = scenes::two_blobs();
  imaging::write_file((dir.path() / "scan.pgm").string(), imaging::encode_pgm(img));
  cli::ImageExplainOptions opt;
  opt.image_path = (dir.path() / "scan.pgm").string();
  opt.output_prefix = (dir.path() / "heat-").string();
  opt.gx = 2;
  opt.gy = 2;
  const auto out = cli::run_explain_image(opt);
  REQUIRE(out["explanations"].size() == 2);
  CHECK(std::filesystem::exists(dir.path() / "heat-0.pgm"));
  CHECK(std::filesystem::exists(dir.path() / "heat-1.json"));
}

TEST_CASE("executable exit codes and repeatability") {
  TempDir dir;
  const auto d = dir.path().string();
  write_csv(dir.path() / "data.csv", {"a", "b"}, {{0, 0}, {2, 1}});
  std::ofstream(dir.path() / "lin.json") << R"({"kind":"linear","weights":[1,2],"intercept":0})";

  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("benchmark --family nope -o " + d + "/x.csv") == 1);
  CHECK(run("explain --data " + d + "/data.csv --model " + d + "/lin.json -o " + d + "/e.json") == 1);
  CHECK(run("explain --data " + d + "/data.csv --data-row 1 --model " + d + "/lin.json -o " + d + "/e.json") == 0);
  CHECK(run("explain --data " + d + "/data.csv --data-row 1 --chi 3 --model " + d + "/lin.json -o " + d + "/e.json") == 2);
  CHECK(run("benchmark -m 20 -o " + d + "/x.csv") == 2);

  CHECK(run("explain --data " + d + "/data.csv --data-row 1 --model " + d + "/lin.json -o " + d + "/e2.json") == 0);
  CHECK(slurp(dir.path() / "e.json") == slurp(dir.path() / "e2.json"));
  CHECK(run("benchmark -m 6 --trials 2 --seed 9 -o " + d + "/b1.csv") == 0);
  CHECK(run("benchmark -m 6 --trials 2 --seed 9 -o " + d + "/b2.csv") == 0);
  CHECK(slurp(dir.path() / "b1.csv") == slurp(dir.path() / "b2.csv"));
  CHECK_FALSE(slurp(dir.path() / "b1.csv").empty());
}
