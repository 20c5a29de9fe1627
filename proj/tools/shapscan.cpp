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
// shapscan: Shapley explanations for tabular models and scan regions, the
// accuracy benchmark and the review service.
//
// Exit codes: 0 ok, 1 usage error, 2 runtime failure.

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "shapscan/cli.hpp"
#include "shapscan/error.hpp"
#include "shapscan/http_server.hpp"
#include "shapscan/service.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void add_eval_options(CLI::App& cmd, shapscan::shapley::EvalOptions& eval) {
  cmd.add_option("--max-background", eval.max_background, "Background rows kept before stride subsampling")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--budget", eval.evaluation_budget, "Maximum coalition x background model evaluations");
  cmd.add_option("--threads", eval.threads, "Model evaluation threads (results do not depend on it)");
}

int serve(const std::string& config_path, const std::string& host, int port, const std::string& data_dir,
          const std::string& ui_dir) {
  auto cfg = shapscan::service::ServiceConfig::load(config_path);
  if (!host.empty()) cfg.host = host;
  if (port > 0) cfg.port = port;
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (!ui_dir.empty()) cfg.ui_dir = ui_dir;

  // Handle SIGINT/SIGTERM on a dedicated thread so shutdown is orderly.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  shapscan::service::ReportService service(cfg);
  shapscan::service::HttpServer server(service);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  std::cerr << "shapscan: serving " << cfg.data_dir << " on http://" << cfg.host << ":" << cfg.port << "\n";
  const bool ok = server.listen(cfg.host, cfg.port);
  if (!ok) {
    std::cerr << "shapscan: cannot listen on " << cfg.host << ":" << cfg.port << "\n";
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shapley explanations for models and scan regions"};
  app.require_subcommand(1);

  shapscan::cli::ExplainOptions explain;
  int explain_chi = 0;
  std::size_t data_row = 0;
  auto* cmd_explain = app.add_subcommand("explain", "Explain one tabular instance");
  cmd_explain->add_option("--data", explain.data_path, "Background CSV with header")->required()->check(CLI::ExistingFile);
  auto* query_opt = cmd_explain->add_option("--query", explain.query_path, "Query CSV with the same header");
  cmd_explain->add_option("--row", explain.query_row, "Row of the query file to explain");
  auto* data_row_opt = cmd_explain->add_option("--data-row", data_row, "Explain this row of the data file instead");
  query_opt->excludes(data_row_opt);
  cmd_explain->add_option("--model", explain.model_path, "Predictor spec JSON")->required()->check(CLI::ExistingFile);
  auto* chi_opt = cmd_explain->add_option("--chi", explain_chi, "Approximation depth (default ceil(m/2))");
  cmd_explain->add_option("-o,--out", explain.output_path, "Attribution JSON output")->required();
  add_eval_options(*cmd_explain, explain.eval);

  shapscan::cli::BenchmarkOptions bench;
  auto* cmd_bench = app.add_subcommand("benchmark", "Depth sweep against the exact reference");
  cmd_bench->add_option("--family", bench.family, "linear, interaction or piecewise")
      ->check(CLI::IsMember({"linear", "interaction", "piecewise"}));
  cmd_bench->add_option("-m", bench.m, "Feature count (<= 14)");
  cmd_bench->add_option("-n", bench.n, "Background rows");
  cmd_bench->add_option("--chis", bench.chis, "Depths to evaluate (default 1..ceil(m/2))")->delimiter(',');
  cmd_bench->add_option("--trials", bench.trials, "Random instances per depth");
  cmd_bench->add_option("--seed", bench.seed, "Generator seed");
  cmd_bench->add_option("-o,--out", bench.output_path, "Metrics CSV output")->required();
  cmd_bench->add_flag("--timing", bench.timing, "Add a wall_ms column (output no longer repeatable)");

  shapscan::cli::ImageExplainOptions img;
  std::string region_text, grid_text = "4x4";
  int img_chi = 0;
  auto* cmd_img = app.add_subcommand("explain-image", "Explain detections or a region of a scan image");
  cmd_img->add_option("--image", img.image_path, "PGM or PNG image")->required()->check(CLI::ExistingFile);
  cmd_img->add_option("--region", region_text, "x,y,w,h (default: every detection)");
  cmd_img->add_option("--grid", grid_text, "Patch grid GXxGY");
  auto* img_chi_opt = cmd_img->add_option("--chi", img_chi, "Approximation depth (default ceil(m/2))");
  cmd_img->add_option("--background", img.background, "blur, blur:<sigma> or uniform:<value>");
  cmd_img->add_option("--model", img.model_path, "Predictor spec JSON (default threshold-blob)");
  cmd_img->add_option("--threshold", img.detector.threshold, "Detection threshold");
  cmd_img->add_option("--min-area", img.detector.min_area, "Minimum lesion area in pixels");
  cmd_img->add_option("-o,--out", img.output_prefix, "Output prefix for <prefix><k>.pgm/.json");
  add_eval_options(*cmd_img, img.eval);

  std::string config_path, host, data_dir, ui_dir;
  int port = 0;
  auto* cmd_serve = app.add_subcommand("serve", "Run the review service");
  cmd_serve->add_option("--config", config_path, "Service configuration JSON");
  cmd_serve->add_option("--host", host, "Listen address");
  cmd_serve->add_option("--port", port, "Listen port");
  cmd_serve->add_option("--data-dir", data_dir, "Data directory");
  cmd_serve->add_option("--ui-dir", ui_dir, "Static review UI directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*cmd_explain) {
      if (*chi_opt) explain.chi = explain_chi;
      if (*data_row_opt) explain.data_row = data_row;
      if (!*data_row_opt && explain.query_path.empty()) {
        std::cerr << "explain: one of --query or --data-row is required\n";
        return kExitUsage;
      }
      const auto out = shapscan::cli::run_explain(explain);
      std::cout << out.dump(2) << "\n";
    } else if (*cmd_bench) {
      shapscan::cli::run_benchmark(bench);
    } else if (*cmd_img) {
      if (!region_text.empty()) img.region = shapscan::cli::parse_region(region_text);
      if (std::sscanf(grid_text.c_str(), "%dx%d", &img.gx, &img.gy) != 2) {
        std::cerr << "explain-image: --grid must look like 4x4\n";
        return kExitUsage;
      }
      if (*img_chi_opt) img.chi = img_chi;
      std::cout << shapscan::cli::run_explain_image(img).dump(2) << "\n";
    } else if (*cmd_serve) {
      return serve(config_path, host, port, data_dir, ui_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "shapscan: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
