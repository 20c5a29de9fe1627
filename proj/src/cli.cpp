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
#include "shapscan/cli.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "shapscan/csv.hpp"
#include "shapscan/error.hpp"
#include "shapscan/model.hpp"

namespace shapscan::cli {

namespace {

double parse_number(const std::string& cell, const std::string& column, std::size_t row) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (cell.empty() || end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw ParameterError("row " + std::to_string(row) + ", column '" + column +
                         "': not a finite number: '" + cell + "'");
  }
  return v;
}

// Numeric rows of \p table, in the column order of \p columns.
Matrix numeric_rows(const csv::Table& table, const std::vector<std::string>& columns,
                    const std::string& what) {
  std::vector<std::size_t> index;
  for (const auto& name : columns) {
    const long at = table.column(name);
    if (at < 0) throw DimensionError(what + " is missing column '" + name + "'");
    index.push_back(static_cast<std::size_t>(at));
  }
  Matrix out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    std::vector<double> values;
    values.reserve(index.size());
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (index[k] >= cells.size()) {
        throw DimensionError(what + " row " + std::to_string(r + 1) + " is missing column '" +
                             columns[k] + "'");
      }
      values.push_back(parse_number(cells[index[k]], columns[k], r + 1));
    }
    out.push_row(values);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw Error("short write to '" + path + "'");
}

}  // namespace

nlohmann::json run_explain(const ExplainOptions& opt) {
  const auto data_table = csv::read_file(opt.data_path);
  const auto& features = data_table.header;
  if (features.empty()) throw ParameterError("data file has no columns");
  Matrix data_rows = numeric_rows(data_table, features, "data file");
  if (data_rows.rows() == 0) throw ParameterError("data file has no rows");

  std::vector<double> query_values;
  if (opt.data_row) {
    if (*opt.data_row >= data_rows.rows()) {
      throw ParameterError("data row " + std::to_string(*opt.data_row) + " out of range (" +
                           std::to_string(data_rows.rows()) + " rows)");
    }
    const auto r = data_rows.row(*opt.data_row);
    query_values.assign(r.begin(), r.end());
  } else {
    if (opt.query_path.empty()) throw ParameterError("a query file or a data row is required");
    const auto query_table = csv::read_file(opt.query_path);
    const Matrix q = numeric_rows(query_table, features, "query file");
    if (opt.query_row >= q.rows()) {
      throw ParameterError("query row " + std::to_string(opt.query_row) + " out of range (" +
                           std::to_string(q.rows()) + " rows)");
    }
    const auto r = q.row(opt.query_row);
    query_values.assign(r.begin(), r.end());
  }

  const auto model = model::load_predictor_file(opt.model_path);
  const std::size_t m = features.size();
  if (model->arity() != m) {
    throw DimensionError("model expects " + std::to_string(model->arity()) +
                         " features but the data file has " + std::to_string(m));
  }
  const shapley::Depth chi = opt.chi ? shapley::Depth(*opt.chi) : shapley::Depth::saturating(m);
  chi.check(m);

  const shapley::Dataset data(std::move(data_rows));
  const shapley::Query query(std::move(query_values));
  const auto attribution = shapley::hypershap(data, query, *model, chi, opt.eval);

  nlohmann::json out = {{"phi0", attribution.phi0},
                        {"phis", attribution.phis},
                        {"prediction", attribution.prediction},
                        {"chi", chi.value()},
                        {"m", m},
                        {"n", std::min(data.n(), opt.eval.max_background)},
                        {"coalition_count", shapley::coalition_count(m, chi)},
                        {"features", features}};
  if (!opt.output_path.empty()) write_text(opt.output_path, out.dump(2) + "\n");
  return out;
}

imaging::BackgroundSpec parse_background(const std::string& text) {
  auto value_after = [&](std::size_t prefix) {
    const std::string v = text.substr(prefix);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw ParameterError("bad background value in '" + text + "'");
    return d;
  };
  if (text == "blur") return imaging::BackgroundSpec::blurred();
  if (text.rfind("blur:", 0) == 0) return imaging::BackgroundSpec::blurred(value_after(5));
  if (text.rfind("uniform:", 0) == 0) return imaging::BackgroundSpec::uniform(value_after(8));
  throw ParameterError("background must be blur, blur:<sigma> or uniform:<value>, got '" + text + "'");
}

imaging::Region parse_region(const std::string& text) {
  imaging::Region r;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &r.x, &r.y, &r.w, &r.h, &tail) != 4) {
    throw ParameterError("region must be x,y,w,h, got '" + text + "'");
  }
  return r;
}

nlohmann::json run_explain_image(const ImageExplainOptions& opt) {
  const auto image = imaging::load_image(opt.image_path);
  const auto background = parse_background(opt.background);
  const std::size_t m = static_cast<std::size_t>(opt.gx) * static_cast<std::size_t>(opt.gy);
  const PredictorRef model = opt.model_path.empty()
                                 ? std::make_shared<model::ThresholdBlobPredictor>(m)
                                 : model::load_predictor_file(opt.model_path);
  const shapley::Depth chi = opt.chi ? shapley::Depth(*opt.chi) : shapley::Depth::saturating(m);

  std::vector<std::pair<std::string, imaging::Region>> targets;
  if (opt.region) {
    targets.emplace_back("region", *opt.region);
  } else {
    for (const auto& d : imaging::detect_lesions(image, opt.detector)) targets.emplace_back(d.id, d.region);
  }

  nlohmann::json results = nlohmann::json::array();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto heat = imaging::explain_region(image, targets[k].second, opt.gx, opt.gy, *model,
                                              background, chi, opt.eval);
    auto meta = imaging::heatmap_to_json(heat);
    meta["target"] = targets[k].first;
    if (!opt.output_prefix.empty()) {
      const std::string stem = opt.output_prefix + std::to_string(k);
      imaging::write_file(stem + ".pgm", imaging::heatmap_to_pgm(heat));
      write_text(stem + ".json", meta.dump(2) + "\n");
      meta["pgm"] = stem + ".pgm";
    }
    results.push_back(std::move(meta));
  }
  return {{"image", opt.image_path}, {"explanations", std::move(results)}};
}

}  // namespace shapscan::cli
