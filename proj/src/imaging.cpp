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
#include "shapscan/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "shapscan/error.hpp"

namespace shapscan::imaging {

ScanImage::ScanImage(int width, int height, std::vector<double> intensities, double spacing_mm)
    : width_(width), height_(height), intensities_(std::move(intensities)) {
  if (width_ < 1 || height_ < 1) throw ImageError("image dimensions must be positive");
  if (intensities_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
    throw ImageError("image has " + std::to_string(intensities_.size()) + " pixels, expected " +
                     std::to_string(width_) + "x" + std::to_string(height_));
  }
  for (double v : intensities_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ImageError("image intensities must lie in [0, 1]");
  }
  set_spacing(spacing_mm);
}

void ScanImage::set_spacing(double spacing_mm) {
  if (!(spacing_mm > 0.0) || !std::isfinite(spacing_mm)) {
    throw ParameterError("pixel spacing must be positive");
  }
  spacing_ = spacing_mm;
}

void check_region(const ScanImage& img, const Region& r) {
  if (r.w < 1 || r.h < 1) throw ParameterError("region width and height must be at least 1");
  if (r.x < 0 || r.y < 0 || r.x > img.width() - r.w || r.y > img.height() - r.h) {
    throw ParameterError("region (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                         std::to_string(r.w) + "," + std::to_string(r.h) +
                         ") lies outside the " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()) + " image");
  }
}

bool overlaps(const Region& a, const Region& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

double intersection_over_union(const Region& a, const Region& b) {
  const long long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const long long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const long long inter = ix * iy;
  const long long uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PatchGrid patch_features(const ScanImage& img, const Region& region, int gx, int gy) {
  check_region(img, region);
  if (gx < 1 || gy < 1) throw ParameterError("patch grid divisions must be at least 1");
  if (gx > region.w || gy > region.h) {
    throw ParameterError("patch grid " + std::to_string(gx) + "x" + std::to_string(gy) +
                         " exceeds the " + std::to_string(region.w) + "x" +
                         std::to_string(region.h) + " region");
  }
  PatchGrid grid;
  grid.region = region;
  grid.gx = gx;
  grid.gy = gy;
  const int base_w = region.w / gx;
  const int base_h = region.h / gy;
  for (int row = 0; row < gy; ++row) {
    for (int col = 0; col < gx; ++col) {
      Region p;
      p.x = region.x + col * base_w;
      p.y = region.y + row * base_h;
      p.w = col == gx - 1 ? region.w - col * base_w : base_w;
      p.h = row == gy - 1 ? region.h - row * base_h : base_h;
      std::vector<std::size_t> pixels;
      pixels.reserve(static_cast<std::size_t>(p.area()));
      for (int y = p.y; y < p.y + p.h; ++y) {
        for (int x = p.x; x < p.x + p.w; ++x) pixels.push_back(img.index(x, y));
      }
      grid.patches.push_back(p);
      grid.mapping.push_back(std::move(pixels));
    }
  }
  return grid;
}

std::vector<double> patch_means(const ScanImage& img, const PatchGrid& grid, int dx, int dy) {
  Region moved = grid.region;
  moved.x += dx;
  moved.y += dy;
  check_region(img, moved);
  std::vector<double> means;
  means.reserve(grid.m());
  for (const auto& p : grid.patches) {
    double sum = 0.0;
    for (int y = p.y; y < p.y + p.h; ++y) {
      for (int x = p.x; x < p.x + p.w; ++x) sum += img.at(x + dx, y + dy);
    }
    means.push_back(sum / static_cast<double>(p.area()));
  }
  return means;
}

std::string_view to_string(DetectionStatus s) {
  switch (s) {
    case DetectionStatus::pending: return "pending";
    case DetectionStatus::confirmed: return "confirmed";
    case DetectionStatus::rejected: return "rejected";
  }
  return "pending";
}

std::string_view to_string(DetectionSource s) {
  return s == DetectionSource::automatic ? "automatic" : "clinician";
}

DetectionStatus parse_status(std::string_view s) {
  if (s == "pending") return DetectionStatus::pending;
  if (s == "confirmed") return DetectionStatus::confirmed;
  if (s == "rejected") return DetectionStatus::rejected;
  throw ParameterError("unknown detection status '" + std::string(s) + "'");
}

DetectionSource parse_source(std::string_view s) {
  if (s == "automatic") return DetectionSource::automatic;
  if (s == "clinician") return DetectionSource::clinician;
  throw ParameterError("unknown detection source '" + std::string(s) + "'");
}

std::vector<Detection> detect_lesions(const ScanImage& img, const DetectorConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    throw ParameterError("detection threshold must lie in (0, 1)");
  }
  if (cfg.min_area < 1) throw ParameterError("minimum lesion area must be at least 1");

  const int w = img.width();
  const int h = img.height();
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<Detection> out;
  std::vector<std::size_t> stack;
  std::vector<std::size_t> members;
  int next_label = 0;

  // Raster scan; components therefore appear in order of their first pixel,
  // and are sorted by bounding box afterwards.
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const auto seed = img.index(x0, y0);
      if (label[seed] >= 0 || img.at(x0, y0) <= cfg.threshold) continue;
      const int id = next_label++;
      members.clear();
      stack.assign(1, seed);
      label[seed] = id;
      int min_x = x0, max_x = x0, min_y = y0, max_y = y0;
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        members.push_back(p);
        const int px = static_cast<int>(p % w);
        const int py = static_cast<int>(p / w);
        min_x = std::min(min_x, px);
        max_x = std::max(max_x, px);
        min_y = std::min(min_y, py);
        max_y = std::max(max_y, py);
        const int nx[4] = {px - 1, px + 1, px, px};
        const int ny[4] = {py, py, py - 1, py + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          const auto q = img.index(nx[k], ny[k]);
          if (label[q] >= 0 || img.at(nx[k], ny[k]) <= cfg.threshold) continue;
          label[q] = id;
          stack.push_back(q);
        }
      }
      if (members.size() < cfg.min_area) continue;

      double inside = 0.0;
      for (auto p : members) inside += img.intensities()[p];
      inside /= static_cast<double>(members.size());

      // Ring: pixels outside the component within Chebyshev distance 2.
      const int rx0 = std::max(0, min_x - 2), rx1 = std::min(w - 1, max_x + 2);
      const int ry0 = std::max(0, min_y - 2), ry1 = std::min(h - 1, max_y + 2);
      const int rw = rx1 - rx0 + 1;
      std::vector<std::uint8_t> ring(static_cast<std::size_t>(rw) * (ry1 - ry0 + 1), 0);
      for (auto p : members) {
        const int px = static_cast<int>(p % w);
        const int py = static_cast<int>(p / w);
        for (int yy = std::max(ry0, py - 2); yy <= std::min(ry1, py + 2); ++yy) {
          for (int xx = std::max(rx0, px - 2); xx <= std::min(rx1, px + 2); ++xx) {
            if (label[img.index(xx, yy)] == id) continue;
            ring[static_cast<std::size_t>(yy - ry0) * rw + (xx - rx0)] = 1;
          }
        }
      }
      double ring_sum = 0.0;
      std::size_t ring_count = 0;
      for (int yy = ry0; yy <= ry1; ++yy) {
        for (int xx = rx0; xx <= rx1; ++xx) {
          if (!ring[static_cast<std::size_t>(yy - ry0) * rw + (xx - rx0)]) continue;
          ring_sum += img.at(xx, yy);
          ++ring_count;
        }
      }
      const double contrast =
          ring_count == 0 ? inside : inside - ring_sum / static_cast<double>(ring_count);

      Detection det;
      det.region = {min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
      det.score = 1.0 / (1.0 + std::exp(-cfg.contrast_gain * contrast));
      out.push_back(std::move(det));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return std::pair(a.region.y, a.region.x) < std::pair(b.region.y, b.region.x);
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = "det-" + std::to_string(i);
  return out;
}

ScanImage gaussian_blur(const ScanImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    norm += kernel[k + radius];
  }
  for (auto& v : kernel) v /= norm;

  const int w = img.width();
  const int h = img.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * img.at(std::clamp(x + k, 0, w - 1), y);
      }
      tmp[img.index(x, y)] = acc;
    }
  }
  std::vector<double> out(tmp.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp[img.index(x, std::clamp(y + k, 0, h - 1))];
      }
      out[img.index(x, y)] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return ScanImage(w, h, std::move(out), img.spacing());
}

BackgroundSpec BackgroundSpec::from_crops(std::vector<Crop> crops) {
  BackgroundSpec spec;
  spec.kind = Kind::crops;
  spec.crops = std::move(crops);
  return spec;
}

BackgroundSpec BackgroundSpec::uniform(double value) {
  BackgroundSpec spec;
  spec.kind = Kind::uniform;
  spec.uniform_value = value;
  return spec;
}

BackgroundSpec BackgroundSpec::blurred(double sigma) {
  BackgroundSpec spec;
  spec.kind = Kind::blurred_self;
  spec.blur_sigma = sigma;
  return spec;
}

shapley::Dataset background_rows(const ScanImage& img, const PatchGrid& grid,
                                 const BackgroundSpec& background) {
  Matrix rows;
  switch (background.kind) {
    case BackgroundSpec::Kind::uniform: {
      if (!(background.uniform_value >= 0.0 && background.uniform_value <= 1.0)) {
        throw ParameterError("uniform background intensity must lie in [0, 1]");
      }
      rows.push_row(std::vector<double>(grid.m(), background.uniform_value));
      break;
    }
    case BackgroundSpec::Kind::blurred_self: {
      const ScanImage blurred = gaussian_blur(img, background.blur_sigma);
      rows.push_row(patch_means(blurred, grid));
      break;
    }
    case BackgroundSpec::Kind::crops: {
      if (background.crops.empty()) throw ParameterError("crop background needs at least one crop");
      for (const auto& crop : background.crops) {
        if (crop.region.w != grid.region.w || crop.region.h != grid.region.h) {
          throw DimensionError("background crop is " + std::to_string(crop.region.w) + "x" +
                               std::to_string(crop.region.h) + ", region is " +
                               std::to_string(grid.region.w) + "x" +
                               std::to_string(grid.region.h));
        }
        rows.push_row(patch_means(crop.image, grid, crop.region.x - grid.region.x,
                                  crop.region.y - grid.region.y));
      }
      break;
    }
  }
  return shapley::Dataset(std::move(rows));
}

double Heatmap::pixel_sum() const {
  double sum = 0.0;
  for (double v : pixels) sum += v;
  return sum;
}

Heatmap explain_region(const ScanImage& img, const Region& region, int gx, int gy,
                       const Predictor& model, const BackgroundSpec& background,
                       const shapley::Depth& chi, const shapley::EvalOptions& options) {
  const PatchGrid grid = patch_features(img, region, gx, gy);
  if (model.arity() != grid.m()) {
    throw DimensionError("model " + model.describe() + " expects " +
                         std::to_string(model.arity()) + " features but the grid has " +
                         std::to_string(grid.m()) + " patches");
  }
  const shapley::Dataset data = background_rows(img, grid, background);
  const shapley::Query query(patch_means(img, grid));
  const auto attribution = shapley::hypershap(data, query, model, chi, options);

  Heatmap heat;
  heat.region = region;
  heat.gx = gx;
  heat.gy = gy;
  heat.phis = attribution.phis;
  heat.phi0 = attribution.phi0;
  heat.prediction = attribution.prediction;
  heat.chi = chi.value();
  heat.pixels.assign(static_cast<std::size_t>(region.area()), 0.0);
  for (std::size_t i = 0; i < grid.m(); ++i) {
    const auto& p = grid.patches[i];
    const double share = attribution.phis[i] / static_cast<double>(p.area());
    for (int y = p.y; y < p.y + p.h; ++y) {
      for (int x = p.x; x < p.x + p.w; ++x) {
        heat.pixels[static_cast<std::size_t>(y - region.y) * region.w + (x - region.x)] = share;
      }
    }
  }
  return heat;
}

namespace {

struct Point {
  long long x, y;
  bool operator<(const Point& o) const { return x != o.x ? x < o.x : y < o.y; }
  bool operator==(const Point&) const = default;
};

long long cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain; collinear points dropped.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

Measurement measure_lesion(const ScanImage& img, const Detection& det, const MeasureConfig& cfg) {
  check_region(img, det.region);
  const auto& r = det.region;
  Measurement out;
  out.detection_id = det.id;
  std::vector<Point> pts;
  double wsum = 0.0, wx = 0.0, wy = 0.0;
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) {
      const double v = img.at(x, y);
      if (v <= cfg.threshold) continue;
      pts.push_back({x, y});
      wsum += v;
      wx += v * x;
      wy += v * y;
    }
  }
  if (pts.empty()) {
    out.empty = true;
    out.centroid_x = r.x + (r.w - 1) / 2.0;
    out.centroid_y = r.y + (r.h - 1) / 2.0;
    return out;
  }
  out.centroid_x = wx / wsum;
  out.centroid_y = wy / wsum;
  const auto hull = convex_hull(std::move(pts));
  long long best = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      const long long dx = hull[i].x - hull[j].x;
      const long long dy = hull[i].y - hull[j].y;
      best = std::max(best, dx * dx + dy * dy);
    }
  }
  out.diameter_mm = std::sqrt(static_cast<double>(best)) * img.spacing();
  return out;
}

ResponseAssessment classify_response(double baseline_sum_mm, double followup_sum_mm) {
  if (!(baseline_sum_mm > 0.0) || !std::isfinite(baseline_sum_mm)) {
    throw ParameterError("baseline diameter sum must be positive");
  }
  if (!std::isfinite(followup_sum_mm) || followup_sum_mm < 0.0) {
    throw ParameterError("follow-up diameter sum must be finite and non-negative");
  }
  ResponseAssessment out;
  // Multiply before dividing so that exact ratios such as 60/50 land on 20.
  out.delta_percent = 100.0 * (followup_sum_mm - baseline_sum_mm) / baseline_sum_mm;
  out.progression = out.delta_percent >= kProgressionCutoffPercent;
  return out;
}

nlohmann::json to_json(const Region& r) {
  return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

Region region_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("region must be an object {x, y, w, h}");
  Region r;
  int* fields[] = {&r.x, &r.y, &r.w, &r.h};
  const char* names[] = {"x", "y", "w", "h"};
  for (int k = 0; k < 4; ++k) {
    if (!j.contains(names[k]) || !j[names[k]].is_number_integer()) {
      throw ParameterError(std::string("region field '") + names[k] + "' must be an integer");
    }
    *fields[k] = j[names[k]].get<int>();
  }
  return r;
}

}  // namespace shapscan::imaging
