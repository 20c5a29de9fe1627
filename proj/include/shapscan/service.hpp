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

// Review workflow over scans: automatic detection at upload, clinician
// confirm/reject/add, on-demand explanations, and a templated report.
//
// Every mutation is appended to a per-scan JSON-lines log before it touches
// memory, and the in-memory state is only ever changed by replaying log
// events, so a restart reproduces the live state exactly.
//
// On disk:
//   <data_dir>/scans/<scan_id>/image.<pgm|png>
//   <data_dir>/scans/<scan_id>/events.jsonl
//   <data_dir>/scans/<scan_id>/explanations/<explanation_id>.{json,pgm}

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shapscan/error.hpp"
#include "shapscan/imaging.hpp"
#include "shapscan/shapley.hpp"

namespace shapscan::service {

/// Error carrying an HTTP status and a machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}

  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "shapscan-data";
  /// Directory served as static files at "/", if non-empty and present.
  std::string ui_dir;
  imaging::DetectorConfig detector;
  imaging::MeasureConfig measure;
  int default_grid = 4;
  double blur_sigma = 2.0;
  /// Model explained by request_explanation. For kind "threshold-blob" the
  /// arity is set to the grid size of each request.
  nlohmann::json explain_model = {{"kind", "threshold-blob"}};
  shapley::EvalOptions eval;

  /// Defaults, overlaid by the JSON file at \p path (when non-empty), then by
  /// SHAPSCAN_HOST, SHAPSCAN_PORT, SHAPSCAN_DATA_DIR, SHAPSCAN_UI_DIR,
  /// SHAPSCAN_EVALUATION_BUDGET and SHAPSCAN_MAX_BACKGROUND.
  static ServiceConfig load(const std::string& path = {});
  void apply_json(const nlohmann::json& j);
  void apply_environment();
};

struct ScanRecord {
  std::string scan_id;
  std::string patient;
  std::string created;
  std::string image_file;
  int width = 0;
  int height = 0;
  double spacing = 1.0;
  std::uint64_t sequence = 0;
};

struct ReviewEvent {
  std::uint64_t seq = 0;
  std::string event_id;
  std::string type;  // scan_created, review, add, request_explanation, finalize
  std::string detection_id;
  std::string action;  // confirm, reject, add, request_explanation, finalize
  std::string actor;
  std::string timestamp;
};

struct ExplanationRecord {
  std::string explanation_id;
  std::string detection_id;  // empty for ad-hoc regions
  imaging::Region region;
  int gx = 4;
  int gy = 4;
  int chi = 1;
  int requested_chi = 1;
  std::string note;
  std::vector<double> phis;
  double phi0 = 0.0;
  double prediction = 0.0;
};

struct ScanState {
  ScanRecord record;
  std::vector<imaging::Detection> detections;
  std::vector<ReviewEvent> events;
  std::vector<ExplanationRecord> explanations;
  bool finalized = false;
  std::uint64_t next_detection = 0;
  std::uint64_t next_explanation = 0;
};

struct ExplanationRequest {
  std::string scan_id;
  std::optional<std::string> detection_id;
  std::optional<imaging::Region> region;
  std::optional<int> gx;
  std::optional<int> gy;
  std::optional<int> chi;
  std::string actor = "clinician";
};

/// ISO-8601 UTC timestamp source; injectable for reproducible tests.
using Clock = std::function<std::string()>;
std::string utc_now();

nlohmann::json to_json(const imaging::Detection& d);
nlohmann::json to_json(const ScanState& s);
nlohmann::json to_json(const ExplanationRecord& e);

class ReportService {
 public:
  /// Opens (or creates) the data directory and replays every scan log.
  explicit ReportService(ServiceConfig config, Clock clock = utc_now);
  ~ReportService();

  ReportService(const ReportService&) = delete;
  ReportService& operator=(const ReportService&) = delete;

  const ServiceConfig& config() const { return config_; }

  struct Created {
    ScanRecord scan;
    std::string report;
  };
  /// Decodes and stores the image, runs detection and returns the initial
  /// report. Nothing is written when the image is invalid.
  Created create_scan(std::span<const std::uint8_t> image_bytes, const std::string& patient,
                      const std::string& actor = "system", double spacing_mm = 1.0);

  /// action is "confirm" or "reject"; re-review is allowed, last action wins.
  imaging::Detection review_detection(const std::string& detection_id, const std::string& action,
                                      const std::string& actor);

  struct Added {
    imaging::Detection detection;
    std::vector<std::string> warnings;
  };
  Added add_detection(const std::string& scan_id, const imaging::Region& region,
                      const std::string& actor);

  /// Computes a heatmap synchronously; chi above ceil(m/2) is clamped.
  ExplanationRecord request_explanation(const ExplanationRequest& request);

  /// Moves the scan to finalized; refused while any detection is pending.
  void finalize(const std::string& scan_id, const std::string& actor);

  /// Deterministic report document, serialized.
  std::string generate_report(const std::string& scan_id) const;
  nlohmann::json report_json(const std::string& scan_id) const;

  ScanState scan(const std::string& scan_id) const;
  std::vector<std::string> scan_ids() const;
  ExplanationRecord explanation(const std::string& explanation_id) const;
  nlohmann::json explanation_json(const std::string& explanation_id) const;
  std::vector<std::uint8_t> explanation_pgm(const std::string& explanation_id) const;
  std::vector<std::uint8_t> image_bytes(const std::string& scan_id) const;

  /// Every scan's state, keyed by id.
  nlohmann::json snapshot() const;

 private:
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& scan_id) const;
  std::shared_ptr<Entry> find_by_child(const std::string& child_id) const;
  void append(Entry& entry, nlohmann::json event);
  void replay_scan(const std::filesystem::path& dir);
  imaging::Heatmap render(const imaging::ScanImage& image, const ExplanationRecord& rec) const;
  PredictorRef explain_model(std::size_t m) const;

  ServiceConfig config_;
  Clock clock_;
  std::filesystem::path root_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> scans_;
  std::uint64_t next_scan_ = 1;
  mutable std::mutex model_mutex_;
  mutable PredictorRef cached_external_;
};

/// Applies one log event to a scan state. Shared by live writes and replay.
void apply_event(ScanState& state, const nlohmann::json& event);

}  // namespace shapscan::service
