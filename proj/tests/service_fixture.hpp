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

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include "scenes.hpp"
#include "shapscan/service.hpp"

namespace scenes {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("shapscan-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Clock returning 2026-01-01T00:00:00Z plus one second per call.
inline shapscan::service::Clock ticking_clock() {
  auto t = std::make_shared<std::atomic<int>>(0);
  return [t] {
    const int s = (*t)++;
    char buf[32];
    std::snprintf(buf, sizeof buf, "2026-01-01T%02d:%02d:%02dZ", (s / 3600) % 24, (s / 60) % 60, s % 60);
    return std::string(buf);
  };
}

inline shapscan::service::ServiceConfig config_in(const TempDir& dir) {
  shapscan::service::ServiceConfig cfg;
  cfg.data_dir = dir.path().string();
  return cfg;
}

inline std::vector<std::uint8_t> pgm(const shapscan::imaging::ScanImage& img) {
  return shapscan::imaging::encode_pgm(img, 65535);
}

}  // namespace scenes
