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

#include <memory>
#include <string>

#include "shapscan/service.hpp"

namespace shapscan::service {

/// HTTP/JSON front end for ReportService.
///
///   POST /scans                      image upload (multipart "image" or raw body)
///   GET  /scans, /scans/{id}, /scans/{id}/report, /scans/{id}/image
///   POST /scans/{id}/detections      {"region":{x,y,w,h}, "actor"}
///   POST /scans/{id}/finalize        {"actor"}
///   POST /detections/{id}/review     {"action":"confirm"|"reject", "actor"}
///   POST /explanations               {"scan_id", "detection_id"|"region", "gx", "gy", "chi"}
///   GET  /explanations/{id}, /explanations/{id}/heatmap.pgm
///
/// Errors are returned as {"code": ..., "message": ...}.
class HttpServer {
 public:
  explicit HttpServer(ReportService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Blocks serving on host:port until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; call listen_after_bind() next.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace shapscan::service
