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
#include "shapscan/predictor.hpp"

#include <string>
#include <utility>

#include "shapscan/error.hpp"

namespace shapscan {

void check_batch_width(const Predictor& model, const Matrix& batch) {
  if (batch.cols() != model.arity()) {
    throw DimensionError("batch has " + std::to_string(batch.cols()) +
                         " columns but model " + model.describe() +
                         " expects " + std::to_string(model.arity()));
  }
}

double Predictor::predict_one(std::span<const double> x) const {
  Matrix batch;
  batch.push_row(x);
  auto out = predict(batch);
  if (out.size() != 1) {
    throw PredictorError("model returned " + std::to_string(out.size()) +
                         " predictions for a single row");
  }
  return out.front();
}

FunctionPredictor::FunctionPredictor(std::size_t arity, Fn fn, std::string name)
    : arity_(arity), fn_(std::move(fn)), name_(std::move(name)) {
  if (arity_ == 0) throw ParameterError("predictor arity must be at least 1");
}

std::vector<double> FunctionPredictor::predict(const Matrix& batch) const {
  check_batch_width(*this, batch);
  std::vector<double> out;
  out.reserve(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) out.push_back(fn_(batch.row(r)));
  return out;
}

}  // namespace shapscan
