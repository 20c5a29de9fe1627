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

#include <vector>

#include "shapscan/imaging.hpp"

namespace scenes {

struct Canvas {
  int w, h;
  std::vector<double> px;

  Canvas(int width, int height, double fill) : w(width), h(height), px(static_cast<std::size_t>(width * height), fill) {}

  Canvas& fill(int x, int y, int rw, int rh, double v) {
    for (int j = y; j < y + rh; ++j)
      for (int i = x; i < x + rw; ++i) px[static_cast<std::size_t>(j * w + i)] = v;
    return *this;
  }
  shapscan::imaging::ScanImage image(double spacing = 1.0) const { return {w, h, px, spacing}; }
};

inline shapscan::imaging::ScanImage two_blobs() {
  return Canvas(48, 48, 0.1).fill(6, 8, 6, 6, 0.9).fill(30, 28, 8, 5, 0.85).image();
}

}  // namespace scenes
