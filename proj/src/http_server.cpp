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
#include "shapscan/http_server.hpp"

#include <filesystem>
#include <optional>

#include "httplib.h"

namespace shapscan::service {

namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, {{"code", code}, {"message", message}}, status);
}

double parse_spacing(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ServiceError(400, "bad_request", "spacing '" + text + "' is not a number");
  return v;
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ServiceError(400, "bad_request", std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ServiceError(400, "bad_request", std::string("field '") + key + "' has the wrong type");
  }
}

// Runs a handler and maps exceptions onto structured error bodies.
template <typename F>
httplib::Server::Handler guarded(F&& fn) {
  return [fn = std::forward<F>(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const ParameterError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const DimensionError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const CapacityError& e) {
      send_error(res, 422, "budget_exceeded", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(ReportService& svc) : service(svc) {}
  ReportService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ReportService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.Post("/scans", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    std::string patient = req.get_param_value("patient");
    std::string actor = req.has_param("actor") ? req.get_param_value("actor") : "system";
    double spacing = 1.0;
    std::string bytes;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("image")) throw ServiceError(400, "bad_request", "multipart upload needs an 'image' part");
      bytes = req.get_file_value("image").content;
      if (req.has_file("patient")) patient = req.get_file_value("patient").content;
      if (req.has_file("actor")) actor = req.get_file_value("actor").content;
      if (req.has_file("spacing")) spacing = parse_spacing(req.get_file_value("spacing").content);
    } else {
      bytes = req.body;
    }
    if (req.has_param("spacing")) spacing = parse_spacing(req.get_param_value("spacing"));
    const auto created = svc.create_scan(
        std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), patient, actor, spacing);
    send_json(res, {{"scan_id", created.scan.scan_id}, {"report", nlohmann::json::parse(created.report)}}, 201);
  }));

  srv.Get("/scans", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"scans", svc.scan_ids()}});
  }));

  srv.Get(R"(/scans/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(svc.scan(req.matches[1])));
  }));

  srv.Get(R"(/scans/([^/]+)/report)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    res.set_content(svc.generate_report(req.matches[1]), "application/json");
  }));

  srv.Get(R"(/scans/([^/]+)/image)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = svc.image_bytes(req.matches[1]);
    const bool png = bytes.size() > 3 && bytes[1] == 'P' && bytes[2] == 'N';
    res.set_content(std::string(bytes.begin(), bytes.end()), png ? "image/png" : "image/x-portable-graymap");
  }));

  srv.Post(R"(/scans/([^/]+)/detections)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("region")) throw ServiceError(400, "bad_request", "field 'region' is required");
    const auto region = imaging::region_from_json(body["region"]);
    const auto added = svc.add_detection(req.matches[1], region,
                                         optional_field<std::string>(body, "actor").value_or("clinician"));
    send_json(res, {{"detection", to_json(added.detection)}, {"warnings", added.warnings}}, 201);
  }));

  srv.Post(R"(/scans/([^/]+)/finalize)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    svc.finalize(req.matches[1], optional_field<std::string>(body, "actor").value_or("clinician"));
    send_json(res, {{"scan_id", std::string(req.matches[1])}, {"status", "finalized"}});
  }));

  srv.Post(R"(/detections/([^/]+)/review)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto action = optional_field<std::string>(body, "action");
    if (!action) throw ServiceError(400, "bad_request", "field 'action' is required");
    const auto det = svc.review_detection(req.matches[1], *action,
                                          optional_field<std::string>(body, "actor").value_or("clinician"));
    send_json(res, to_json(det));
  }));

  srv.Post("/explanations", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    ExplanationRequest er;
    er.scan_id = optional_field<std::string>(body, "scan_id").value_or("");
    er.detection_id = optional_field<std::string>(body, "detection_id");
    if (body.contains("region") && !body["region"].is_null()) er.region = imaging::region_from_json(body["region"]);
    er.gx = optional_field<int>(body, "gx");
    er.gy = optional_field<int>(body, "gy");
    er.chi = optional_field<int>(body, "chi");
    er.actor = optional_field<std::string>(body, "actor").value_or("clinician");
    const auto rec = svc.request_explanation(er);
    send_json(res, svc.explanation_json(rec.explanation_id), 201);
  }));

  srv.Get(R"(/explanations/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, svc.explanation_json(req.matches[1]));
  }));

  srv.Get(R"(/explanations/([^/]+)/heatmap\.pgm)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = svc.explanation_pgm(req.matches[1]);
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/x-portable-graymap");
  }));

  const auto& ui = svc.config().ui_dir;
  if (!ui.empty() && std::filesystem::is_directory(ui)) srv.set_mount_point("/", ui);

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) send_error(res, 404, "not_found", "no such endpoint");
  });
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace shapscan::service
