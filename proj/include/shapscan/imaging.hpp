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
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "shapscan/predictor.hpp"
#include "shapscan/shapley.hpp"

namespace shapscan::imaging {

/// Grayscale image with intensities normalized to [0, 1], row-major.
class ScanImage {
 public:
  ScanImage() = default;
  ScanImage(int width, int height, std::vector<double> intensities, double spacing_mm = 1.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double spacing() const { return spacing_; }
  void set_spacing(double spacing_mm);

  double at(int x, int y) const { return intensities_[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  std::span<const double> intensities() const { return intensities_; }

  bool operator==(const ScanImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> intensities_;
  double spacing_ = 1.0;
};

/// Pixel bounding box.
struct Region {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  long long area() const { return static_cast<long long>(w) * h; }
  bool operator==(const Region&) const = default;
};

/// Throws ParameterError unless the region has positive size and lies
/// inside the image.
void check_region(const ScanImage& img, const Region& region);
double intersection_over_union(const Region& a, const Region& b);
bool overlaps(const Region& a, const Region& b);

/// Region split into gx columns by gy rows of near-equal rectangles; the
/// last column and row absorb remainder pixels. Feature k is the patch at
/// column k % gx, row k / gx.
struct PatchGrid {
  Region region;
  int gx = 1;
  int gy = 1;
  std::vector<Region> patches;
  /// Image pixel indices covered by each patch.
  std::vector<std::vector<std::size_t>> mapping;

  std::size_t m() const { return patches.size(); }
};

PatchGrid patch_features(const ScanImage& img, const Region& region, int gx, int gy);

/// Mean intensity of every patch of \p grid sampled from \p img at
/// (region.x + dx, region.y + dy) offsets, i.e. the same layout translated.
std::vector<double> patch_means(const ScanImage& img, const PatchGrid& grid, int dx = 0,
                                int dy = 0);

enum class DetectionStatus { pending, confirmed, rejected };
enum class DetectionSource { automatic, clinician };

std::string_view to_string(DetectionStatus s);
std::string_view to_string(DetectionSource s);
DetectionStatus parse_status(std::string_view s);
DetectionSource parse_source(std::string_view s);

struct Detection {
  std::string id;
  Region region;
  double score = 0.0;
  DetectionStatus status = DetectionStatus::pending;
  DetectionSource source = DetectionSource::automatic;

  bool operator==(const Detection&) const = default;
};

struct DetectorConfig {
  double threshold = 0.5;
  /// Components with at least this many pixels are kept.
  std::size_t min_area = 4;
  /// score = 1 / (1 + exp(-contrast_gain * (mean inside - mean of ring)))
  double contrast_gain = 10.0;
};

/// 4-connected components of pixels strictly above the threshold with at
/// least min_area pixels, ordered by the (y, x) of their bounding boxes.
/// The score contrasts the component against the ring of pixels within
/// Chebyshev distance 2 of it.
std::vector<Detection> detect_lesions(const ScanImage& img, const DetectorConfig& cfg = {});

/// Separable Gaussian blur with a kernel of radius ceil(3 sigma), edges
/// clamped. sigma <= 0 returns the image unchanged.
ScanImage gaussian_blur(const ScanImage& img, double sigma);

/// Where replacement patch values come from.
struct BackgroundSpec {
  enum class Kind { crops, uniform, blurred_self };

  struct Crop {
    ScanImage image;
    Region region;
  };

  Kind kind = Kind::blurred_self;
  std::vector<Crop> crops;
  double uniform_value = 0.0;
  double blur_sigma = 2.0;

  static BackgroundSpec from_crops(std::vector<Crop> crops);
  static BackgroundSpec uniform(double value);
  static BackgroundSpec blurred(double sigma = 2.0);
};

/// Background dataset for a grid: one row per crop, or a single row for the
/// uniform and blurred variants.
shapley::Dataset background_rows(const ScanImage& img, const PatchGrid& grid,
                                 const BackgroundSpec& background);

/// Patch Shapley values painted back onto pixels.
struct Heatmap {
  Region region;
  int gx = 1;
  int gy = 1;
  /// region.w * region.h per-pixel contributions, row-major within region.
  std::vector<double> pixels;
  std::vector<double> phis;
  double phi0 = 0.0;
  double prediction = 0.0;
  int chi = 1;

  double pixel_sum() const;
};

/// Explains the model's score of a region. Features are the grid's patch
/// means; each pixel receives phi_i divided by its patch's pixel count.
Heatmap explain_region(const ScanImage& img, const Region& region, int gx, int gy,
                       const Predictor& model, const BackgroundSpec& background,
                       const shapley::Depth& chi, const shapley::EvalOptions& options = {});

struct MeasureConfig {
  double threshold = 0.5;
};

struct Measurement {
  std::string detection_id;
  double diameter_mm = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  /// Set when no pixel in the region exceeded the threshold.
  bool empty = false;

  bool operator==(const Measurement&) const = default;
};

/// Longest distance between centers of above-threshold pixels in the
/// detection box, scaled by spacing; centroid is intensity weighted.
Measurement measure_lesion(const ScanImage& img, const Detection& det,
                           const MeasureConfig& cfg = {});

/// Relative increase that marks progression, in percent.
inline constexpr double kProgressionCutoffPercent = 20.0;

struct ResponseAssessment {
  bool progression = false;
  double delta_percent = 0.0;
};

ResponseAssessment classify_response(double baseline_sum_mm, double followup_sum_mm);

// Image I/O.

/// Reads PGM (P2/P5, 8 or 16 bit) or grayscale PNG.
ScanImage load_image(const std::string& path);
ScanImage decode_image(std::span<const std::uint8_t> bytes);
/// Binary PGM with maxval 255 or 65535.
std::vector<std::uint8_t> encode_pgm(const ScanImage& img, int maxval = 255);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

/// Signed heatmap as 8-bit PGM: p = round(127.5 * (1 + v / s)) clamped to
/// [0, 255], s = max |v| over the heatmap (all pixels 128 when s = 0).
std::vector<std::uint8_t> heatmap_to_pgm(const Heatmap& heatmap);
/// JSON sidecar with raw patch values, baseline and the PGM scale s.
nlohmann::json heatmap_to_json(const Heatmap& heatmap);

nlohmann::json to_json(const Region& r);
Region region_from_json(const nlohmann::json& j);

}  // namespace shapscan::imaging
