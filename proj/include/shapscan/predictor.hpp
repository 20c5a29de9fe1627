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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shapscan/matrix.hpp"

namespace shapscan {

/// A real-valued model over m-dimensional inputs, evaluated in batches.
///
/// Implementations must be deterministic: the same batch always yields the
/// same outputs, and a k-row batch yields exactly the k single-row results.
class Predictor {
 public:
  virtual ~Predictor() = default;

  /// Input width m.
  virtual std::size_t arity() const = 0;

  /// Evaluates every row of \p batch. Throws DimensionError when the batch
  /// width differs from arity(), PredictorError when the model fails.
  virtual std::vector<double> predict(const Matrix& batch) const = 0;

  /// Whether predict() may be called from several threads at once.
  virtual bool concurrent() const { return true; }

  /// Short human-readable description (kind and key parameters).
  virtual std::string describe() const = 0;

  double predict_one(std::span<const double> x) const;
};

using PredictorRef = std::shared_ptr<const Predictor>;

/// Wraps a per-row callable. Used for composed models and in tests.
class FunctionPredictor final : public Predictor {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  FunctionPredictor(std::size_t arity, Fn fn, std::string name = "function");

  std::size_t arity() const override { return arity_; }
  std::vector<double> predict(const Matrix& batch) const override;
  std::string describe() const override { return name_; }

 private:
  std::size_t arity_;
  Fn fn_;
  std::string name_;
};

/// Throws DimensionError unless batch.cols() == model.arity().
void check_batch_width(const Predictor& model, const Matrix& batch);

}  // namespace shapscan
