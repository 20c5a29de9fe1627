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
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "shapscan/error.hpp"
#include "shapscan/imaging.hpp"

namespace shapscan::imaging {

namespace {

class PgmReader {
 public:
  explicit PgmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Whitespace and '#' comments may separate header tokens.
  unsigned long header_number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw ImageError(std::string("corrupt PGM header: missing ") + what);
    }
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1'000'000'000UL) throw ImageError(std::string("corrupt PGM header: ") + what + " too large");
    }
    return v;
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  // Exactly one whitespace byte separates maxval from binary raster data.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ImageError("corrupt PGM header: no separator before raster");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t byte(std::size_t at) const { return bytes_[at]; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

ScanImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const bool ascii = bytes[1] == '2';
  PgmReader rd(bytes);
  const auto width = rd.header_number("width");
  const auto height = rd.header_number("height");
  const auto maxval = rd.header_number("maxval");
  if (width == 0 || height == 0) throw ImageError("corrupt PGM header: zero dimension");
  if (maxval == 0 || maxval > 65535) throw ImageError("corrupt PGM header: maxval out of range");
  if (width * height > 100'000'000UL) throw ImageError("PGM image too large");
  const std::size_t count = width * height;
  std::vector<double> px(count);
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      rd.skip_space_and_comments();
      if (rd.remaining() == 0) throw ImageError("corrupt PGM: truncated pixel data");
      const auto v = rd.header_number("pixel");
      if (v > maxval) throw ImageError("corrupt PGM: pixel exceeds maxval");
      px[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  } else {
    rd.single_space();
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (rd.remaining() < count * bpp) throw ImageError("corrupt PGM: truncated pixel data");
    std::size_t at = rd.pos();
    for (std::size_t i = 0; i < count; ++i, at += bpp) {
      const unsigned v = bpp == 2 ? (unsigned{rd.byte(at)} << 8) | rd.byte(at + 1) : rd.byte(at);
      if (v > maxval) throw ImageError("corrupt PGM: pixel exceeds maxval");
      px[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return ScanImage(static_cast<int>(width), static_cast<int>(height), std::move(px));
}

struct PngState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  std::string error;
  std::vector<std::uint8_t> raster;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int channels = 0;
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, st->bytes.data() + st->pos, len);
  st->pos += len;
}

void png_fail(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngState*>(png_get_error_ptr(png));
  st->error = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

// All state that must survive a longjmp lives in *st; no automatic object
// with a destructor is created between setjmp and the end of the function.
bool png_decode_raw(PngState* st) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, st, png_fail, png_warn);
  if (!png) {
    st->error = "cannot allocate PNG reader";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    st->error = "cannot allocate PNG info";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, st, png_read_bytes);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    st->error = "only grayscale PNG images are supported";
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  st->width = png_get_image_width(png, info);
  st->height = png_get_image_height(png, info);
  st->bit_depth = png_get_bit_depth(png, info);
  st->channels = png_get_channels(png, info);
  if (static_cast<unsigned long long>(st->width) * st->height > 100'000'000ULL) {
    st->error = "PNG image too large";
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  st->raster.resize(stride * st->height);
  st->rows.resize(st->height);
  for (png_uint_32 y = 0; y < st->height; ++y) st->rows[y] = st->raster.data() + y * stride;
  png_read_image(png, st->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

ScanImage decode_png(std::span<const std::uint8_t> bytes) {
  auto st = std::make_unique<PngState>();
  st->bytes = bytes;
  if (!png_decode_raw(st.get())) throw ImageError("corrupt PNG: " + st->error);
  if (st->channels != 1) throw ImageError("unexpected PNG channel layout");
  const double maxval = st->bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bpp = st->bit_depth == 16 ? 2 : 1;
  const std::size_t stride = st->raster.size() / st->height;
  std::vector<double> px(static_cast<std::size_t>(st->width) * st->height);
  for (png_uint_32 y = 0; y < st->height; ++y) {
    const auto* row = st->raster.data() + y * stride;
    for (png_uint_32 x = 0; x < st->width; ++x) {
      const unsigned v = bpp == 2 ? (unsigned{row[2 * x]} << 8) | row[2 * x + 1] : row[x];
      px[static_cast<std::size_t>(y) * st->width + x] = v / maxval;
    }
  }
  return ScanImage(static_cast<int>(st->width), static_cast<int>(st->height), std::move(px));
}

}  // namespace

ScanImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) {
    return decode_pgm(bytes);
  }
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return decode_png(bytes);
  }
  throw ImageError("unknown image format (expected PGM P2/P5 or PNG)");
}

ScanImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_image(bytes);
}

std::vector<std::uint8_t> encode_pgm(const ScanImage& img, int maxval) {
  if (maxval != 255 && maxval != 65535) throw ParameterError("PGM maxval must be 255 or 65535");
  const std::string header = "P5\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : img.intensities()) {
    const auto q = static_cast<unsigned>(std::lround(v * maxval));
    if (maxval == 65535) out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path + "'");
}

namespace {

double heatmap_scale(const Heatmap& heat) {
  double s = 0.0;
  for (double v : heat.pixels) s = std::max(s, std::abs(v));
  return s;
}

}  // namespace

std::vector<std::uint8_t> heatmap_to_pgm(const Heatmap& heat) {
  const double s = heatmap_scale(heat);
  const std::string header = "P5\n" + std::to_string(heat.region.w) + " " +
                             std::to_string(heat.region.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : heat.pixels) {
    const long p = s == 0.0 ? 128 : std::lround(127.5 * (1.0 + v / s));
    out.push_back(static_cast<std::uint8_t>(std::clamp(p, 0L, 255L)));
  }
  return out;
}

nlohmann::json heatmap_to_json(const Heatmap& heat) {
  return {{"region", to_json(heat.region)},
          {"gx", heat.gx},
          {"gy", heat.gy},
          {"chi", heat.chi},
          {"phi0", heat.phi0},
          {"phis", heat.phis},
          {"prediction", heat.prediction},
          {"pgm_scale", heatmap_scale(heat)},
          {"pgm_mapping", "p = clamp(round(127.5 * (1 + v / pgm_scale)), 0, 255); 128 when pgm_scale = 0"}};
}

}  // namespace shapscan::imaging
