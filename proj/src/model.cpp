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
#include "shapscan/model.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sstream>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <utility>

#include "shapscan/error.hpp"

extern char** environ;

namespace shapscan::model {

namespace {

std::string format_weights(const std::vector<double>& w) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "," : "") << w[i];
  os << "]";
  return os.str();
}

std::string clip(const std::string& s, std::size_t max = 200) {
  return s.size() <= max ? s : s.substr(0, max) + "...";
}

}  // namespace

LinearPredictor::LinearPredictor(std::vector<double> weights, double intercept)
    : weights_(std::move(weights)), intercept_(intercept) {
  if (weights_.empty()) throw ParameterError("linear model needs at least one weight");
  for (double w : weights_) {
    if (!std::isfinite(w)) throw ParameterError("linear model weights must be finite");
  }
  if (!std::isfinite(intercept_)) throw ParameterError("linear model intercept must be finite");
}

std::vector<double> LinearPredictor::predict(const Matrix& batch) const {
  check_batch_width(*this, batch);
  std::vector<double> out(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < weights_.size(); ++j) acc += weights_[j] * x[j];
    out[r] = acc + intercept_;
  }
  return out;
}

std::string LinearPredictor::describe() const {
  std::ostringstream os;
  os << "linear(weights=" << format_weights(weights_) << ", intercept=" << intercept_ << ")";
  return os.str();
}

ProductPredictor::ProductPredictor(std::size_t arity) : arity_(arity) {
  if (arity_ == 0) throw ParameterError("product model arity must be at least 1");
}

std::vector<double> ProductPredictor::predict(const Matrix& batch) const {
  check_batch_width(*this, batch);
  std::vector<double> out(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    double acc = 1.0;
    for (double v : batch.row(r)) acc *= v;
    out[r] = acc;
  }
  return out;
}

std::string ProductPredictor::describe() const {
  return "product(arity=" + std::to_string(arity_) + ")";
}

ThresholdBlobPredictor::ThresholdBlobPredictor(std::size_t arity, ThresholdBlobConfig config)
    : arity_(arity), config_(config) {
  if (arity_ == 0) throw ParameterError("threshold-blob model arity must be at least 1");
  if (!std::isfinite(config_.threshold) || !std::isfinite(config_.gain) ||
      !std::isfinite(config_.midpoint)) {
    throw ParameterError("threshold-blob constants must be finite");
  }
}

std::vector<double> ThresholdBlobPredictor::predict(const Matrix& batch) const {
  check_batch_width(*this, batch);
  std::vector<double> out(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    double excess = 0.0;
    for (double v : batch.row(r)) excess += std::max(0.0, v - config_.threshold);
    excess /= static_cast<double>(arity_);
    out[r] = 1.0 / (1.0 + std::exp(-config_.gain * (excess - config_.midpoint)));
  }
  return out;
}

std::string ThresholdBlobPredictor::describe() const {
  std::ostringstream os;
  os << "threshold-blob(arity=" << arity_ << ", threshold=" << config_.threshold
     << ", gain=" << config_.gain << ", midpoint=" << config_.midpoint << ")";
  return os.str();
}

ExternalPredictor::ExternalPredictor(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  if (command_.empty()) throw ParameterError("external model command is empty");
  if (timeout_.count() <= 0) throw ParameterError("external model timeout must be positive");

  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw PredictorError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  // dup2 clears FD_CLOEXEC on the duplicated descriptors.
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  const char* argv[] = {"/bin/sh", "-c", command_.c_str(), nullptr};
  // Own process group, so a kill also reaches anything the shell started.
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);
  pid_t pid = -1;
  const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, &attr,
                               const_cast<char* const*>(argv), environ);
  posix_spawnattr_destroy(&attr);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    throw PredictorError("cannot start external model '" + command_ + "': " + std::strerror(rc));
  }
  fd_ = fds[0];
  pid_ = pid;

  nlohmann::json reply;
  try {
    reply = exchange({{"op", "arity"}});
  } catch (...) {
    shutdown();
    throw;
  }
  if (!reply.contains("arity") || !reply["arity"].is_number_integer() ||
      reply["arity"].get<long long>() < 1) {
    shutdown();
    throw ProtocolError("external model '" + command_ +
                        "' answered the arity handshake with: " + clip(reply.dump()));
  }
  arity_ = reply["arity"].get<std::size_t>();
}

ExternalPredictor::~ExternalPredictor() { shutdown(); }

void ExternalPredictor::shutdown() const {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    // Closing the socket delivers EOF; give the process a moment to exit.
    bool exited = false;
    for (int i = 0; i < 50 && !exited; ++i) {
      exited = ::waitpid(pid_, nullptr, WNOHANG) == pid_;
      if (!exited) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(-pid_, SIGKILL);
    if (!exited) ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

void ExternalPredictor::write_line(const std::string& line) const {
  std::string payload = line + "\n";
  std::size_t sent = 0;
  while (sent < payload.size()) {
    const auto rc = ::send(fd_, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      shutdown();
      throw PredictorError("external model '" + command_ + "' stopped reading input: " + reason);
    }
    sent += static_cast<std::size_t>(rc);
  }
}

std::string ExternalPredictor::read_line() const {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      shutdown();
      throw PredictorError("external model '" + command_ + "' timed out after " +
                           std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      shutdown();
      throw PredictorError("poll on external model failed: " + reason);
    }
    if (ready == 0) continue;
    char chunk[65536];
    const auto got = ::recv(fd_, chunk, sizeof chunk, 0);
    if (got < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      shutdown();
      throw PredictorError("reading from external model failed: " + reason);
    }
    if (got == 0) {
      int status = 0;
      std::string how = "closed its output";
      if (pid_ > 0 && ::waitpid(pid_, &status, 0) == pid_) {
        ::kill(-pid_, SIGKILL);
        pid_ = -1;
        if (WIFEXITED(status)) how = "exited with status " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) how = "was killed by signal " + std::to_string(WTERMSIG(status));
      }
      shutdown();
      throw PredictorError("external model '" + command_ + "' " + how +
                           " before replying");
    }
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

nlohmann::json ExternalPredictor::exchange(const nlohmann::json& request) const {
  std::lock_guard lock(mutex_);
  if (fd_ < 0) throw PredictorError("external model '" + command_ + "' is not running");
  write_line(request.dump());
  const std::string line = read_line();
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    shutdown();
    throw ProtocolError("external model '" + command_ + "' replied with a non-JSON line: '" +
                        clip(line) + "'");
  }
  if (!reply.is_object()) {
    shutdown();
    throw ProtocolError("external model '" + command_ + "' replied with a non-object: '" +
                        clip(line) + "'");
  }
  if (reply.contains("error")) {
    throw PredictorError("external model '" + command_ + "' reported: " +
                         clip(reply["error"].is_string() ? reply["error"].get<std::string>()
                                                         : reply["error"].dump()));
  }
  return reply;
}

std::vector<double> ExternalPredictor::predict(const Matrix& batch) const {
  check_batch_width(*this, batch);
  if (batch.rows() == 0) return {};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.row(r);
    rows.push_back(std::vector<double>(x.begin(), x.end()));
  }
  const auto reply = exchange({{"op", "predict"}, {"rows", std::move(rows)}});
  if (!reply.contains("preds") || !reply["preds"].is_array()) {
    throw ProtocolError("external model '" + command_ + "' reply lacks a preds array: " +
                        clip(reply.dump()));
  }
  const auto& preds = reply["preds"];
  if (preds.size() != batch.rows()) {
    throw ProtocolError("external model '" + command_ + "' returned " +
                        std::to_string(preds.size()) + " predictions for " +
                        std::to_string(batch.rows()) + " rows");
  }
  std::vector<double> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!preds[i].is_number()) {
      throw ProtocolError("external model '" + command_ + "' prediction " + std::to_string(i) +
                          " is not a number: " + clip(preds[i].dump()));
    }
    const double v = preds[i].get<double>();
    if (!std::isfinite(v)) {
      throw PredictorError("external model '" + command_ + "' prediction " +
                           std::to_string(i) + " is not finite");
    }
    out.push_back(v);
  }
  return out;
}

std::string ExternalPredictor::describe() const { return "external(" + command_ + ")"; }

namespace {

double number_field(const nlohmann::json& spec, const char* key, double fallback) {
  if (!spec.contains(key)) return fallback;
  if (!spec[key].is_number()) {
    throw ParameterError(std::string("model field '") + key + "' must be a number");
  }
  return spec[key].get<double>();
}

std::size_t arity_field(const nlohmann::json& spec) {
  if (!spec.contains("arity")) throw ParameterError("model field 'arity' is required");
  if (!spec["arity"].is_number_integer() || spec["arity"].get<long long>() < 1) {
    throw ParameterError("model field 'arity' must be a positive integer");
  }
  return spec["arity"].get<std::size_t>();
}

}  // namespace

PredictorRef load_predictor(const nlohmann::json& spec) {
  if (!spec.is_object()) throw ParameterError("model spec must be a JSON object");
  if (!spec.contains("kind") || !spec["kind"].is_string()) {
    throw ParameterError("model spec needs a string 'kind'");
  }
  const auto kind = spec["kind"].get<std::string>();
  if (kind == "linear") {
    if (!spec.contains("weights") || !spec["weights"].is_array()) {
      throw ParameterError("linear model needs a 'weights' array");
    }
    std::vector<double> weights;
    for (const auto& w : spec["weights"]) {
      if (!w.is_number()) throw ParameterError("linear model weights must be numbers");
      weights.push_back(w.get<double>());
    }
    return std::make_shared<LinearPredictor>(std::move(weights),
                                             number_field(spec, "intercept", 0.0));
  }
  if (kind == "product") return std::make_shared<ProductPredictor>(arity_field(spec));
  if (kind == "threshold-blob") {
    ThresholdBlobConfig cfg;
    cfg.threshold = number_field(spec, "threshold", cfg.threshold);
    cfg.gain = number_field(spec, "gain", cfg.gain);
    cfg.midpoint = number_field(spec, "midpoint", cfg.midpoint);
    return std::make_shared<ThresholdBlobPredictor>(arity_field(spec), cfg);
  }
  if (kind == "external") {
    if (!spec.contains("cmd") || !spec["cmd"].is_string()) {
      throw ParameterError("external model needs a string 'cmd'");
    }
    const double seconds =
        number_field(spec, "timeout_s", ExternalPredictor::kDefaultTimeout.count() / 1000.0);
    if (!(seconds > 0)) throw ParameterError("external model 'timeout_s' must be positive");
    return std::make_shared<ExternalPredictor>(
        spec["cmd"].get<std::string>(),
        std::chrono::milliseconds(static_cast<long long>(std::llround(seconds * 1000.0))));
  }
  throw ParameterError("unknown model kind '" + kind + "'");
}

PredictorRef load_predictor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open model spec '" + path + "'");
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("model spec '" + path + "' is not valid JSON: " + e.what());
  }
  return load_predictor(spec);
}

}  // namespace shapscan::model
