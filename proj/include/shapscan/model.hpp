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

#include <chrono>
#include <cstddef>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <vector>

#include "json.hpp"
#include "shapscan/predictor.hpp"

namespace shapscan::model {

/// out = X w + intercept
class LinearPredictor final : public Predictor {
 public:
  LinearPredictor(std::vector<double> weights, double intercept);

  std::size_t arity() const override { return weights_.size(); }
  std::vector<double> predict(const Matrix& batch) const override;
  std::string describe() const override;

  const std::vector<double>& weights() const { return weights_; }
  double intercept() const { return intercept_; }

 private:
  std::vector<double> weights_;
  double intercept_;
};

/// out_i = prod_j x_ij
class ProductPredictor final : public Predictor {
 public:
  explicit ProductPredictor(std::size_t arity);

  std::size_t arity() const override { return arity_; }
  std::vector<double> predict(const Matrix& batch) const override;
  std::string describe() const override;

 private:
  std::size_t arity_;
};

/// Region score over patch mean intensities:
///
///   excess = (1/m) * sum_j max(0, x_j - threshold)
///   score  = 1 / (1 + exp(-gain * (excess - midpoint)))
///
/// so patches brighter than the threshold raise the score and dimmer patches
/// are ignored.
struct ThresholdBlobConfig {
  double threshold = 0.5;
  double gain = 20.0;
  double midpoint = 0.1;
};

class ThresholdBlobPredictor final : public Predictor {
 public:
  ThresholdBlobPredictor(std::size_t arity, ThresholdBlobConfig config = {});

  std::size_t arity() const override { return arity_; }
  std::vector<double> predict(const Matrix& batch) const override;
  std::string describe() const override;

  const ThresholdBlobConfig& config() const { return config_; }

 private:
  std::size_t arity_;
  ThresholdBlobConfig config_;
};

/// A model living in a child process, spoken to with newline-delimited JSON
/// on its stdin/stdout:
///
///   -> {"op":"arity"}                    <- {"arity":m}
///   -> {"op":"predict","rows":[[...]]}   <- {"preds":[...]}
///
/// Requests and replies strictly alternate. A reply {"error":"..."} is
/// reported as a PredictorError. Any timeout or framing violation kills the
/// process and later calls fail.
class ExternalPredictor final : public Predictor {
 public:
  static constexpr std::chrono::milliseconds kDefaultTimeout{30'000};

  /// Starts \p command under /bin/sh and performs the arity handshake.
  explicit ExternalPredictor(std::string command,
                             std::chrono::milliseconds timeout = kDefaultTimeout);
  ~ExternalPredictor() override;

  ExternalPredictor(const ExternalPredictor&) = delete;
  ExternalPredictor& operator=(const ExternalPredictor&) = delete;

  std::size_t arity() const override { return arity_; }
  std::vector<double> predict(const Matrix& batch) const override;
  bool concurrent() const override { return false; }
  std::string describe() const override;

  /// Sends one request line and returns the parsed reply line.
  nlohmann::json exchange(const nlohmann::json& request) const;

 private:
  void write_line(const std::string& line) const;
  std::string read_line() const;
  void shutdown() const;

  std::string command_;
  std::chrono::milliseconds timeout_;
  std::size_t arity_ = 0;
  mutable std::mutex mutex_;
  mutable int fd_ = -1;
  mutable pid_t pid_ = -1;
  mutable std::string buffer_;
};

/// Builds a predictor from a configuration record:
///
///   {"kind":"linear","weights":[...],"intercept":0}
///   {"kind":"product","arity":3}
///   {"kind":"threshold-blob","arity":16,"threshold":0.5,"gain":20,"midpoint":0.1}
///   {"kind":"external","cmd":"./model.sh","timeout_s":30}
///
/// Throws ParameterError for unknown kinds and missing or invalid fields.
PredictorRef load_predictor(const nlohmann::json& spec);

/// Reads a JSON configuration file and calls load_predictor().
PredictorRef load_predictor_file(const std::string& path);

}  // namespace shapscan::model
