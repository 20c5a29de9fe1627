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
#include "shapscan/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <utility>

#include "shapscan/model.hpp"

namespace shapscan::service {

namespace fs = std::filesystem;
using imaging::Detection;
using imaging::DetectionSource;
using imaging::DetectionStatus;
using imaging::Region;

namespace {

ServiceError bad_request(const std::string& msg) { return {400, "bad_request", msg}; }
ServiceError not_found(const std::string& msg) { return {404, "not_found", msg}; }
ServiceError conflict(const std::string& msg) { return {409, "conflict", msg}; }

std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string plural(std::size_t n, const std::string& word) {
  return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.id = j.at("id").get<std::string>();
  d.region = imaging::region_from_json(j.at("region"));
  d.score = j.at("score").get<double>();
  d.status = imaging::parse_status(j.at("status").get<std::string>());
  d.source = imaging::parse_source(j.at("source").get<std::string>());
  return d;
}

ExplanationRecord explanation_from_json(const nlohmann::json& j) {
  ExplanationRecord e;
  e.explanation_id = j.at("id").get<std::string>();
  e.detection_id = j.value("detection_id", std::string());
  e.region = imaging::region_from_json(j.at("region"));
  e.gx = j.at("gx").get<int>();
  e.gy = j.at("gy").get<int>();
  e.chi = j.at("chi").get<int>();
  e.requested_chi = j.at("requested_chi").get<int>();
  e.note = j.value("note", std::string());
  e.phis = j.at("phis").get<std::vector<double>>();
  e.phi0 = j.at("phi0").get<double>();
  e.prediction = j.at("prediction").get<double>();
  return e;
}

std::string child_scan_id(const std::string& child_id) {
  const auto cut = child_id.rfind('-');
  if (cut == std::string::npos || cut == 0) return {};
  return child_id.substr(0, cut);
}

std::uint64_t scan_number(const std::string& scan_id) {
  if (scan_id.rfind("scan-", 0) != 0) return 0;
  try {
    return std::stoull(scan_id.substr(5));
  } catch (...) {
    return 0;
  }
}

}  // namespace

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

// Configuration -----------------------------------------------------------

void ServiceConfig::apply_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("service configuration must be a JSON object");
  try {
    host = j.value("host", host);
    port = j.value("port", port);
    data_dir = j.value("data_dir", data_dir);
    ui_dir = j.value("ui_dir", ui_dir);
    default_grid = j.value("default_grid", default_grid);
    blur_sigma = j.value("blur_sigma", blur_sigma);
    if (j.contains("explain_model")) explain_model = j["explain_model"];
    eval.evaluation_budget = j.value("evaluation_budget", eval.evaluation_budget);
    eval.max_background = j.value("max_background", eval.max_background);
    eval.threads = j.value("threads", eval.threads);
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      detector.threshold = d.value("threshold", detector.threshold);
      detector.min_area = d.value("min_area", detector.min_area);
      detector.contrast_gain = d.value("contrast_gain", detector.contrast_gain);
    }
    if (j.contains("measure")) measure.threshold = j["measure"].value("threshold", measure.threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid service configuration: ") + e.what());
  }
  if (default_grid < 1) throw ParameterError("default_grid must be at least 1");
}

void ServiceConfig::apply_environment() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  try {
    if (auto v = env("SHAPSCAN_HOST")) host = *v;
    if (auto v = env("SHAPSCAN_PORT")) port = std::stoi(*v);
    if (auto v = env("SHAPSCAN_DATA_DIR")) data_dir = *v;
    if (auto v = env("SHAPSCAN_UI_DIR")) ui_dir = *v;
    if (auto v = env("SHAPSCAN_EVALUATION_BUDGET")) eval.evaluation_budget = std::stoull(*v);
    if (auto v = env("SHAPSCAN_MAX_BACKGROUND")) eval.max_background = std::stoull(*v);
  } catch (const std::exception& e) {
    throw ParameterError(std::string("invalid SHAPSCAN_* environment value: ") + e.what());
  }
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  ServiceConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open configuration '" + path + "'");
    try {
      cfg.apply_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParameterError("configuration '" + path + "' is not valid JSON: " + e.what());
    }
  }
  cfg.apply_environment();
  return cfg;
}

// Serialization -----------------------------------------------------------

nlohmann::json to_json(const Detection& d) {
  return {{"id", d.id},
          {"region", imaging::to_json(d.region)},
          {"score", d.score},
          {"status", std::string(imaging::to_string(d.status))},
          {"source", std::string(imaging::to_string(d.source))}};
}

nlohmann::json to_json(const ExplanationRecord& e) {
  nlohmann::json j = {{"id", e.explanation_id},
                      {"region", imaging::to_json(e.region)},
                      {"gx", e.gx},
                      {"gy", e.gy},
                      {"chi", e.chi},
                      {"requested_chi", e.requested_chi},
                      {"phis", e.phis},
                      {"phi0", e.phi0},
                      {"prediction", e.prediction}};
  if (!e.detection_id.empty()) j["detection_id"] = e.detection_id;
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

nlohmann::json to_json(const ScanState& s) {
  nlohmann::json detections = nlohmann::json::array();
  for (const auto& d : s.detections) detections.push_back(to_json(d));
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.events) {
    nlohmann::json ev = {{"seq", e.seq},        {"event_id", e.event_id}, {"type", e.type},
                         {"action", e.action},  {"actor", e.actor},       {"timestamp", e.timestamp}};
    if (!e.detection_id.empty()) ev["detection_id"] = e.detection_id;
    events.push_back(std::move(ev));
  }
  nlohmann::json explanations = nlohmann::json::array();
  for (const auto& e : s.explanations) explanations.push_back(to_json(e));
  return {{"scan",
           {{"scan_id", s.record.scan_id},
            {"patient", s.record.patient},
            {"created", s.record.created},
            {"image_file", s.record.image_file},
            {"width", s.record.width},
            {"height", s.record.height},
            {"spacing", s.record.spacing},
            {"sequence", s.record.sequence}}},
          {"detections", std::move(detections)},
          {"events", std::move(events)},
          {"explanations", std::move(explanations)},
          {"status", s.finalized ? "finalized" : "open"}};
}

// Event application -------------------------------------------------------

void apply_event(ScanState& state, const nlohmann::json& event) {
  ReviewEvent ev;
  ev.seq = event.at("seq").get<std::uint64_t>();
  ev.type = event.at("type").get<std::string>();
  ev.actor = event.value("actor", std::string());
  ev.timestamp = event.value("ts", std::string());
  if (ev.seq != state.events.size() + 1) {
    throw Error("event log out of order: expected seq " + std::to_string(state.events.size() + 1) +
                ", got " + std::to_string(ev.seq));
  }

  auto find_detection = [&](const std::string& id) -> Detection& {
    for (auto& d : state.detections) {
      if (d.id == id) return d;
    }
    throw Error("event " + std::to_string(ev.seq) + " references unknown detection " + id);
  };

  if (ev.type == "scan_created") {
    const auto& s = event.at("scan");
    state.record.scan_id = s.at("scan_id").get<std::string>();
    state.record.patient = s.at("patient").get<std::string>();
    state.record.created = s.at("created").get<std::string>();
    state.record.image_file = s.at("image_file").get<std::string>();
    state.record.width = s.at("width").get<int>();
    state.record.height = s.at("height").get<int>();
    state.record.spacing = s.at("spacing").get<double>();
    state.record.sequence = s.at("sequence").get<std::uint64_t>();
    for (const auto& d : event.at("detections")) state.detections.push_back(detection_from_json(d));
    state.next_detection = state.detections.size();
    ev.action = "create";
  } else if (ev.type == "review") {
    ev.detection_id = event.at("detection_id").get<std::string>();
    ev.action = event.at("action").get<std::string>();
    auto& d = find_detection(ev.detection_id);
    d.status = ev.action == "confirm" ? DetectionStatus::confirmed : DetectionStatus::rejected;
  } else if (ev.type == "add") {
    auto d = detection_from_json(event.at("detection"));
    ev.detection_id = d.id;
    ev.action = "add";
    state.detections.push_back(std::move(d));
    ++state.next_detection;
  } else if (ev.type == "request_explanation") {
    auto e = explanation_from_json(event.at("explanation"));
    ev.detection_id = e.detection_id;
    ev.action = "request_explanation";
    state.explanations.push_back(std::move(e));
    ++state.next_explanation;
  } else if (ev.type == "finalize") {
    ev.action = "finalize";
    state.finalized = true;
  } else {
    throw Error("unknown event type '" + ev.type + "'");
  }
  ev.event_id = state.record.scan_id + "-ev" + std::to_string(ev.seq);
  state.events.push_back(std::move(ev));
}

// Service -----------------------------------------------------------------

struct ReportService::Entry {
  // Fixed at creation; readable without the lock.
  std::string scan_id;
  std::string patient;
  std::string image_file;
  std::uint64_t sequence = 0;
  std::shared_ptr<const imaging::ScanImage> image;
  fs::path dir;

  mutable std::shared_mutex mutex;
  ScanState state;
  std::ofstream log;

  void pin_record() {
    scan_id = state.record.scan_id;
    patient = state.record.patient;
    image_file = state.record.image_file;
    sequence = state.record.sequence;
  }
};

ReportService::ReportService(ServiceConfig config, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)), root_(config_.data_dir) {
  std::error_code ec;
  fs::create_directories(root_ / "scans", ec);
  if (ec) throw Error("cannot create data directory '" + root_.string() + "': " + ec.message());
  std::vector<fs::path> dirs;
  for (const auto& it : fs::directory_iterator(root_ / "scans")) {
    const auto name = it.path().filename().string();
    if (it.is_directory() && name.rfind(".tmp-", 0) != 0) dirs.push_back(it.path());
    if (it.is_directory() && name.rfind(".tmp-", 0) == 0) fs::remove_all(it.path(), ec);
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) replay_scan(dir);
}

ReportService::~ReportService() = default;

void ReportService::replay_scan(const fs::path& dir) {
  auto entry = std::make_shared<Entry>();
  entry->dir = dir;
  std::ifstream in(dir / "events.jsonl");
  if (!in) throw Error("scan directory " + dir.string() + " has no event log");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json event;
    try {
      event = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      // A torn final line from an interrupted append is dropped.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw Error("corrupt event log " + (dir / "events.jsonl").string() + " line " +
                  std::to_string(lineno));
    }
    apply_event(entry->state, event);
  }
  if (entry->state.events.empty()) throw Error("empty event log in " + dir.string());
  entry->image = std::make_shared<const imaging::ScanImage>([&] {
    auto img = imaging::load_image((dir / entry->state.record.image_file).string());
    img.set_spacing(entry->state.record.spacing);
    return img;
  }());
  entry->log.open(dir / "events.jsonl", std::ios::app);
  entry->pin_record();
  const auto id = entry->scan_id;
  next_scan_ = std::max(next_scan_, scan_number(id) + 1);
  scans_[id] = std::move(entry);
}

std::shared_ptr<ReportService::Entry> ReportService::find(const std::string& scan_id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = scans_.find(scan_id);
  if (it == scans_.end()) throw not_found("unknown scan '" + scan_id + "'");
  return it->second;
}

std::shared_ptr<ReportService::Entry> ReportService::find_by_child(const std::string& child_id) const {
  const auto scan_id = child_scan_id(child_id);
  std::shared_lock lock(registry_mutex_);
  auto it = scans_.find(scan_id);
  if (it == scans_.end()) throw not_found("unknown id '" + child_id + "'");
  return it->second;
}

void ReportService::append(Entry& entry, nlohmann::json event) {
  event["seq"] = entry.state.events.size() + 1;
  if (!event.contains("ts")) event["ts"] = clock_();
  // Validate by applying to a copy first so a bad event never reaches disk.
  ScanState next = entry.state;
  apply_event(next, event);
  entry.log << event.dump() << '\n';
  entry.log.flush();
  if (!entry.log) throw Error("failed to append to event log of " + entry.state.record.scan_id);
  entry.state = std::move(next);
}

ReportService::Created ReportService::create_scan(std::span<const std::uint8_t> bytes,
                                                  const std::string& patient,
                                                  const std::string& actor, double spacing_mm) {
  imaging::ScanImage img;
  try {
    img = imaging::decode_image(bytes);
    img.set_spacing(spacing_mm);
  } catch (const Error& e) {
    throw ServiceError(400, "invalid_image", e.what());
  }
  const bool png = bytes.size() >= 4 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G';
  auto detections = imaging::detect_lesions(img, config_.detector);

  std::uint64_t number;
  {
    std::unique_lock lock(registry_mutex_);
    number = next_scan_++;
  }
  const std::string scan_id = "scan-" + std::to_string(number);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    detections[i].id = scan_id + "-d" + std::to_string(i);
  }
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : detections) dets.push_back(to_json(d));
  const std::string image_file = png ? "image.png" : "image.pgm";
  const std::string now = clock_();
  nlohmann::json event = {{"seq", 1},
                          {"type", "scan_created"},
                          {"actor", actor},
                          {"ts", now},
                          {"scan",
                           {{"scan_id", scan_id},
                            {"patient", patient},
                            {"created", now},
                            {"image_file", image_file},
                            {"width", img.width()},
                            {"height", img.height()},
                            {"spacing", img.spacing()},
                            {"sequence", number}}},
                          {"detections", std::move(dets)}};

  auto entry = std::make_shared<Entry>();
  apply_event(entry->state, event);
  entry->image = std::make_shared<const imaging::ScanImage>(std::move(img));

  // Stage everything in a temporary directory and publish it with a rename.
  const fs::path staging = root_ / "scans" / (".tmp-" + scan_id);
  const fs::path final_dir = root_ / "scans" / scan_id;
  try {
    fs::create_directories(staging);
    imaging::write_file((staging / image_file).string(), bytes);
    {
      std::ofstream log(staging / "events.jsonl", std::ios::trunc);
      log << event.dump() << '\n';
      if (!log.flush()) throw Error("cannot write event log");
    }
    fs::rename(staging, final_dir);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw Error(std::string("cannot persist scan: ") + e.what());
  }
  entry->dir = final_dir;
  entry->log.open(final_dir / "events.jsonl", std::ios::app);
  entry->pin_record();
  ScanRecord record = entry->state.record;
  {
    std::unique_lock lock(registry_mutex_);
    scans_[scan_id] = std::move(entry);
  }
  return {record, generate_report(scan_id)};
}

Detection ReportService::review_detection(const std::string& detection_id,
                                          const std::string& action, const std::string& actor) {
  if (action != "confirm" && action != "reject") {
    throw bad_request("review action must be 'confirm' or 'reject', got '" + action + "'");
  }
  auto entry = find_by_child(detection_id);
  std::unique_lock lock(entry->mutex);
  const auto& dets = entry->state.detections;
  if (std::none_of(dets.begin(), dets.end(), [&](const Detection& d) { return d.id == detection_id; })) {
    throw not_found("unknown detection '" + detection_id + "'");
  }
  if (entry->state.finalized) throw conflict("scan " + entry->state.record.scan_id + " is finalized");
  append(*entry, {{"type", "review"}, {"detection_id", detection_id}, {"action", action}, {"actor", actor}});
  for (const auto& d : entry->state.detections) {
    if (d.id == detection_id) return d;
  }
  throw Error("detection vanished after review");
}

ReportService::Added ReportService::add_detection(const std::string& scan_id, const Region& region,
                                                  const std::string& actor) {
  auto entry = find(scan_id);
  std::unique_lock lock(entry->mutex);
  try {
    imaging::check_region(*entry->image, region);
  } catch (const ParameterError& e) {
    throw ServiceError(400, "region_out_of_bounds", e.what());
  }
  if (entry->state.finalized) throw conflict("scan " + scan_id + " is finalized");
  Added out;
  for (const auto& d : entry->state.detections) {
    if (d.region == region) out.warnings.push_back("region duplicates detection " + d.id);
  }
  Detection det;
  det.id = scan_id + "-d" + std::to_string(entry->state.next_detection);
  det.region = region;
  det.score = 1.0;
  det.status = DetectionStatus::confirmed;
  det.source = DetectionSource::clinician;
  append(*entry, {{"type", "add"}, {"detection", to_json(det)}, {"actor", actor}, {"warnings", out.warnings}});
  out.detection = det;
  return out;
}

PredictorRef ReportService::explain_model(std::size_t m) const {
  const auto& spec = config_.explain_model;
  const auto kind = spec.value("kind", std::string("threshold-blob"));
  if (kind == "external") {
    std::lock_guard lock(model_mutex_);
    if (!cached_external_) cached_external_ = model::load_predictor(spec);
    return cached_external_;
  }
  auto copy = spec;
  if (kind == "threshold-blob" || kind == "product") copy["arity"] = m;
  return model::load_predictor(copy);
}

imaging::Heatmap ReportService::render(const imaging::ScanImage& image,
                                       const ExplanationRecord& rec) const {
  imaging::Heatmap heat;
  heat.region = rec.region;
  heat.gx = rec.gx;
  heat.gy = rec.gy;
  heat.phis = rec.phis;
  heat.phi0 = rec.phi0;
  heat.prediction = rec.prediction;
  heat.chi = rec.chi;
  const auto grid = imaging::patch_features(image, rec.region, rec.gx, rec.gy);
  heat.pixels.assign(static_cast<std::size_t>(rec.region.area()), 0.0);
  for (std::size_t i = 0; i < grid.m(); ++i) {
    const auto& p = grid.patches[i];
    const double share = rec.phis[i] / static_cast<double>(p.area());
    for (int y = p.y; y < p.y + p.h; ++y) {
      for (int x = p.x; x < p.x + p.w; ++x) {
        heat.pixels[static_cast<std::size_t>(y - rec.region.y) * rec.region.w + (x - rec.region.x)] = share;
      }
    }
  }
  return heat;
}

ExplanationRecord ReportService::request_explanation(const ExplanationRequest& req) {
  if (req.detection_id && req.region) {
    throw bad_request("give either detection_id or region, not both");
  }
  if (!req.detection_id && !req.region) throw bad_request("detection_id or region is required");

  std::shared_ptr<Entry> entry;
  if (req.detection_id) {
    entry = find_by_child(*req.detection_id);
    if (!req.scan_id.empty() && req.scan_id != entry->scan_id) {
      throw bad_request("detection " + *req.detection_id + " does not belong to scan " + req.scan_id);
    }
  } else {
    if (req.scan_id.empty()) throw bad_request("scan_id is required with an ad-hoc region");
    entry = find(req.scan_id);
  }

  ExplanationRecord rec;
  {
    std::shared_lock lock(entry->mutex);
    if (req.detection_id) {
      const auto& dets = entry->state.detections;
      auto it = std::find_if(dets.begin(), dets.end(),
                             [&](const Detection& d) { return d.id == *req.detection_id; });
      if (it == dets.end()) throw not_found("unknown detection '" + *req.detection_id + "'");
      rec.region = it->region;
      rec.detection_id = it->id;
    } else {
      rec.region = *req.region;
    }
  }
  const auto& image = *entry->image;
  try {
    imaging::check_region(image, rec.region);
  } catch (const ParameterError& e) {
    throw ServiceError(400, "region_out_of_bounds", e.what());
  }
  rec.gx = req.gx.value_or(config_.default_grid);
  rec.gy = req.gy.value_or(config_.default_grid);
  if (rec.gx < 1 || rec.gy < 1) throw bad_request("gx and gy must be at least 1");
  if (rec.gx > rec.region.w || rec.gy > rec.region.h) {
    throw ServiceError(400, "grid_exceeds_region",
                       "grid " + std::to_string(rec.gx) + "x" + std::to_string(rec.gy) +
                           " exceeds the " + std::to_string(rec.region.w) + "x" +
                           std::to_string(rec.region.h) + " region");
  }
  const std::size_t m = static_cast<std::size_t>(rec.gx) * static_cast<std::size_t>(rec.gy);
  const int saturating = shapley::Depth::saturating(m).value();
  rec.requested_chi = req.chi.value_or(saturating);
  if (rec.requested_chi < 1) throw bad_request("chi must be at least 1");
  rec.chi = std::min(rec.requested_chi, saturating);
  if (rec.chi != rec.requested_chi) {
    rec.note = "chi clamped from " + std::to_string(rec.requested_chi) + " to " +
               std::to_string(rec.chi) + " (coalitions are complete at ceil(m/2))";
  }

  const auto background = imaging::BackgroundSpec::blurred(config_.blur_sigma);
  const std::uint64_t n = 1;  // blurred-self background is a single row
  const auto budget = config_.eval.evaluation_budget;
  if (shapley::coalition_count(m, shapley::Depth(rec.chi)) * n > budget) {
    const bool grid_limited = shapley::coalition_count(m, shapley::Depth(1)) * n > budget;
    throw ServiceError(422, "budget_exceeded",
                       std::string("explanation exceeds the evaluation budget of ") +
                           std::to_string(budget) + "; reduce " + (grid_limited ? "gx*gy" : "chi"));
  }

  imaging::Heatmap heat;
  try {
    const auto model = explain_model(m);
    heat = imaging::explain_region(image, rec.region, rec.gx, rec.gy, *model, background,
                                   shapley::Depth(rec.chi), config_.eval);
  } catch (const CapacityError& e) {
    throw ServiceError(422, "budget_exceeded", e.what());
  } catch (const DimensionError& e) {
    throw ServiceError(422, "model_mismatch", e.what());
  } catch (const PredictorError& e) {
    throw ServiceError(502, "model_failure", e.what());
  }
  rec.phis = heat.phis;
  rec.phi0 = heat.phi0;
  rec.prediction = heat.prediction;

  std::unique_lock lock(entry->mutex);
  const auto& scan_id = entry->scan_id;
  rec.explanation_id = scan_id + "-x" + std::to_string(entry->state.next_explanation);
  append(*entry, {{"type", "request_explanation"}, {"explanation", to_json(rec)}, {"actor", req.actor}});
  std::error_code ec;
  fs::create_directories(entry->dir / "explanations", ec);
  imaging::write_file((entry->dir / "explanations" / (rec.explanation_id + ".pgm")).string(),
                      imaging::heatmap_to_pgm(heat));
  const auto sidecar = imaging::heatmap_to_json(heat).dump(2) + "\n";
  imaging::write_file((entry->dir / "explanations" / (rec.explanation_id + ".json")).string(),
                      std::span(reinterpret_cast<const std::uint8_t*>(sidecar.data()), sidecar.size()));
  return rec;
}

void ReportService::finalize(const std::string& scan_id, const std::string& actor) {
  auto entry = find(scan_id);
  std::unique_lock lock(entry->mutex);
  if (entry->state.finalized) return;
  std::size_t pending = 0;
  for (const auto& d : entry->state.detections) pending += d.status == DetectionStatus::pending;
  if (pending > 0) {
    throw conflict("cannot finalize scan " + scan_id + ": " + plural(pending, "detection") +
                   " still pending");
  }
  append(*entry, {{"type", "finalize"}, {"actor", actor}});
}

ScanState ReportService::scan(const std::string& scan_id) const {
  auto entry = find(scan_id);
  std::shared_lock lock(entry->mutex);
  return entry->state;
}

std::vector<std::string> ReportService::scan_ids() const {
  std::shared_lock lock(registry_mutex_);
  std::vector<std::pair<std::uint64_t, std::string>> ids;
  for (const auto& [id, entry] : scans_) ids.emplace_back(scan_number(id), id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::string> out;
  for (auto& p : ids) out.push_back(std::move(p.second));
  return out;
}

ExplanationRecord ReportService::explanation(const std::string& explanation_id) const {
  auto entry = find_by_child(explanation_id);
  std::shared_lock lock(entry->mutex);
  for (const auto& e : entry->state.explanations) {
    if (e.explanation_id == explanation_id) return e;
  }
  throw not_found("unknown explanation '" + explanation_id + "'");
}

nlohmann::json ReportService::explanation_json(const std::string& explanation_id) const {
  const auto rec = explanation(explanation_id);
  auto j = to_json(rec);
  j["scan_id"] = child_scan_id(explanation_id);
  j["m"] = rec.phis.size();
  std::vector<std::size_t> order(rec.phis.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rec.phis[a] > rec.phis[b]; });
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
    top.push_back({{"patch", order[k]}, {"phi", rec.phis[order[k]]}});
  }
  j["top_patches"] = std::move(top);
  const auto heat = render(*find_by_child(explanation_id)->image, rec);
  const auto sidecar = imaging::heatmap_to_json(heat);
  j["pgm_scale"] = sidecar["pgm_scale"];
  j["pgm_mapping"] = sidecar["pgm_mapping"];
  j["heatmap_url"] = "/explanations/" + explanation_id + "/heatmap.pgm";
  return j;
}

std::vector<std::uint8_t> ReportService::explanation_pgm(const std::string& explanation_id) const {
  const auto rec = explanation(explanation_id);
  return imaging::heatmap_to_pgm(render(*find_by_child(explanation_id)->image, rec));
}

std::vector<std::uint8_t> ReportService::image_bytes(const std::string& scan_id) const {
  auto entry = find(scan_id);
  std::ifstream in(entry->dir / entry->image_file, std::ios::binary);
  if (!in) throw Error("image file missing for scan " + scan_id);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json ReportService::report_json(const std::string& scan_id) const {
  auto entry = find(scan_id);
  ScanState state;
  {
    std::shared_lock lock(entry->mutex);
    state = entry->state;
  }
  const auto& image = *entry->image;

  auto confirmed_measurements = [&](const ScanState& s, const imaging::ScanImage& img) {
    std::vector<imaging::Measurement> out;
    for (const auto& d : s.detections) {
      if (d.status == DetectionStatus::confirmed) out.push_back(imaging::measure_lesion(img, d, config_.measure));
    }
    return out;
  };

  const auto measurements = confirmed_measurements(state, image);
  std::size_t confirmed = 0, rejected = 0, pending = 0;
  for (const auto& d : state.detections) {
    confirmed += d.status == DetectionStatus::confirmed;
    rejected += d.status == DetectionStatus::rejected;
    pending += d.status == DetectionStatus::pending;
  }
  double current_sum = 0.0;
  for (const auto& m : measurements) current_sum += m.diameter_mm;

  // Most recent earlier scan of the same patient label.
  std::shared_ptr<Entry> prior;
  {
    std::shared_lock lock(registry_mutex_);
    for (const auto& [id, other] : scans_) {
      if (other == entry) continue;
      if (other->patient != entry->patient || other->sequence >= entry->sequence) continue;
      if (!prior || other->sequence > prior->sequence) prior = other;
    }
  }

  std::ostringstream narrative;
  if (state.detections.empty()) {
    narrative << "No lesions detected.";
  } else {
    narrative << plural(confirmed, "confirmed lesion");
    if (rejected) narrative << "; " << plural(rejected, "rejected candidate");
    if (pending) narrative << "; " << plural(pending, "pending candidate");
    narrative << ".";
    std::size_t k = 0;
    for (const auto& m : measurements) {
      narrative << "\nLesion " << ++k << " (" << m.detection_id << "): centroid (" << fixed(m.centroid_x)
                << ", " << fixed(m.centroid_y) << ") px, diameter " << fixed(m.diameter_mm) << " mm.";
    }
  }

  nlohmann::json progression = nullptr;
  if (prior) {
    ScanState prior_state;
    {
      std::shared_lock lock(prior->mutex);
      prior_state = prior->state;
    }
    double prior_sum = 0.0;
    for (const auto& m : confirmed_measurements(prior_state, *prior->image)) prior_sum += m.diameter_mm;
    if (prior_sum > 0.0) {
      const auto resp = imaging::classify_response(prior_sum, current_sum);
      progression = {{"prior_scan_id", prior_state.record.scan_id},
                     {"baseline_sum_mm", prior_sum},
                     {"followup_sum_mm", current_sum},
                     {"delta_percent", resp.delta_percent},
                     {"progression", resp.progression}};
      narrative << "\nSum of confirmed lesion diameters " << fixed(current_sum) << " mm versus "
                << fixed(prior_sum) << " mm on prior scan " << prior_state.record.scan_id << " ("
                << (resp.delta_percent >= 0 ? "+" : "") << fixed(resp.delta_percent) << "%): "
                << (resp.progression ? "progression." : "no progression.");
    }
  }

  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : state.detections) dets.push_back(to_json(d));
  nlohmann::json meas = nlohmann::json::array();
  for (const auto& m : measurements) {
    meas.push_back({{"detection_id", m.detection_id},
                    {"diameter_mm", m.diameter_mm},
                    {"centroid", {{"x", m.centroid_x}, {"y", m.centroid_y}}},
                    {"empty", m.empty}});
  }
  nlohmann::json expl = nlohmann::json::array();
  for (const auto& e : state.explanations) {
    nlohmann::json ref = {{"id", e.explanation_id}, {"region", imaging::to_json(e.region)},
                          {"gx", e.gx}, {"gy", e.gy}, {"chi", e.chi}};
    if (!e.detection_id.empty()) ref["detection_id"] = e.detection_id;
    expl.push_back(std::move(ref));
  }
  return {{"scan_id", state.record.scan_id},
          {"patient", state.record.patient},
          {"created", state.record.created},
          {"status", state.finalized ? "finalized" : "open"},
          {"counts", {{"confirmed", confirmed}, {"rejected", rejected}, {"pending", pending},
                      {"total", state.detections.size()}}},
          {"detections", std::move(dets)},
          {"measurements", std::move(meas)},
          {"explanations", std::move(expl)},
          {"progression", std::move(progression)},
          {"narrative", narrative.str()}};
}

std::string ReportService::generate_report(const std::string& scan_id) const {
  return report_json(scan_id).dump(2) + "\n";
}

nlohmann::json ReportService::snapshot() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& id : scan_ids()) out[id] = to_json(scan(id));
  return out;
}

}  // namespace shapscan::service
