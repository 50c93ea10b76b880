/**
 * Copyright 2026 The finreid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "finreid/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <png.h>

#include "finreid/error.hpp"

namespace finreid::data {

namespace {
constexpr const char* kModule = "data";

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Bilinear sample of one channel with edge replication outside the frame.
double sample(const Image& im, std::size_t c, double sy, double sx) {
  const double maxy = static_cast<double>(im.height - 1);
  const double maxx = static_cast<double>(im.width - 1);
  sy = std::clamp(sy, 0.0, maxy);
  sx = std::clamp(sx, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, im.height - 1);
  const std::size_t x1 = std::min(x0 + 1, im.width - 1);
  const double wy = sy - static_cast<double>(y0);
  const double wx = sx - static_cast<double>(x0);
  const double top = im.at(c, y0, x0) * (1.0 - wx) + im.at(c, y0, x1) * wx;
  const double bottom = im.at(c, y1, x0) * (1.0 - wx) + im.at(c, y1, x1) * wx;
  return top * (1.0 - wy) + bottom * wy;
}
}  // namespace

Image resize(const Image& image, std::size_t side) {
  if (side < 8) throw Error(kModule, "resize target side must be at least 8");
  if (image.height == 0 || image.width == 0) throw Error(kModule, "resize of an empty image");
  Image out(image.channels, side, side);
  const double scale_y = static_cast<double>(image.height) / static_cast<double>(side);
  const double scale_x = static_cast<double>(image.width) / static_cast<double>(side);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < side; ++y) {
      const double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
      for (std::size_t x = 0; x < side; ++x) {
        const double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
        out.at(c, y, x) = clamp01(sample(image, c, sy, sx));
      }
    }
  return out;
}

Image rotate(const Image& image, double degrees) {
  Image out(image.channels, image.height, image.width);
  const double t = degrees * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map: destination pixel back to its source location.
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double sx = cx + ct * dx - st * dy;
      const double sy = cy + st * dx + ct * dy;
      for (std::size_t c = 0; c < image.channels; ++c)
        out.at(c, y, x) = clamp01(sample(image, c, sy, sx));
    }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double chroma = mx - mn;
  v = mx;
  s = mx > 0.0 ? chroma / mx : 0.0;
  if (chroma <= 0.0) {
    h = 0.0;
    return;
  }
  double hh;
  if (mx == r) {
    hh = (g - b) / chroma;
    if (hh < 0.0) hh += 6.0;
  } else if (mx == g) {
    hh = (b - r) / chroma + 2.0;
  } else {
    hh = (r - g) / chroma + 4.0;
  }
  h = hh / 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  if (s <= 0.0) {
    r = g = b = v;
    return;
  }
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

namespace {
template <typename F>
Image map_hsv(const Image& image, F f) {
  if (image.channels != 3) return image;
  Image out = image;
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    double h, s, v;
    rgb_to_hsv(image.pixels[i], image.pixels[plane + i], image.pixels[2 * plane + i], h, s, v);
    if (s <= 0.0) continue;  // hue is undefined on the gray axis
    f(h, s);
    double r, g, b;
    hsv_to_rgb(h, s, v, r, g, b);
    out.pixels[i] = clamp01(r);
    out.pixels[plane + i] = clamp01(g);
    out.pixels[2 * plane + i] = clamp01(b);
  }
  return out;
}
}  // namespace

Image adjust_hue(const Image& image, double delta) {
  return map_hsv(image, [delta](double& h, double&) {
    h += delta;
    h -= std::floor(h);
  });
}

Image adjust_saturation(const Image& image, double factor) {
  return map_hsv(image, [factor](double&, double& s) { s = clamp01(s * factor); });
}

// ---------------------------------------------------------------- PGM

namespace {
void skip_pgm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}
}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(kModule, "cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IoError(kModule, "'" + path + "' is not a PGM file");
  std::size_t w = 0, h = 0, maxval = 0;
  skip_pgm_space(in);
  in >> w;
  skip_pgm_space(in);
  in >> h;
  skip_pgm_space(in);
  in >> maxval;
  if (!in || w == 0 || h == 0 || maxval == 0 || maxval > 65535)
    throw IoError(kModule, "malformed PGM header in '" + path + "'");
  Image img(1, h, w);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (double& v : img.pixels) {
      std::size_t raw;
      if (!(in >> raw) || raw > maxval) throw IoError(kModule, "malformed PGM data in '" + path + "'");
      v = static_cast<double>(raw) * scale;
    }
    return img;
  }
  in.get();
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(w * h * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError(kModule, "truncated PGM data in '" + path + "'");
  for (std::size_t i = 0; i < w * h; ++i) {
    const std::size_t v = bytes_per == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1];
    img.pixels[i] = std::min(1.0, static_cast<double>(v) * scale);
  }
  return img;
}

void write_pgm(const Image& image, const std::string& path) {
  if (image.channels != 1) throw IoError(kModule, "PGM output needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(kModule, "cannot write '" + path + "'");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  for (double v : image.pixels) out.put(static_cast<char>(std::lround(clamp01(v) * 255.0)));
}

// ---------------------------------------------------------------- PNG

Image read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw IoError(kModule, "cannot read PNG '" + path + "': " + png.message);
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError(kModule, "cannot decode PNG '" + path + "': " + msg);
  }
  Image img(channels, png.height, png.width);
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      img.pixels[c * plane + i] = static_cast<double>(buf[i * channels + c]) / 255.0;
  return img;
}

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    throw IoError(kModule, "PNG output needs 1 or 3 channels");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t plane = image.height * image.width;
  std::vector<png_byte> buf(plane * image.channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < image.channels; ++c)
      buf[i * image.channels + c] =
          static_cast<png_byte>(std::lround(clamp01(image.pixels[c * plane + i]) * 255.0));
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, buf.data(), 0, nullptr))
    throw IoError(kModule, std::string("PNG encode failed: ") + png.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, buf.data(), 0, nullptr))
    throw IoError(kModule, std::string("PNG encode failed: ") + png.message);
  out.resize(size);
  return out;
}

void write_png(const Image& image, const std::string& path) {
  const std::string bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(kModule, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_image(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw IoError(kModule, "unsupported image type '" + ext + "' for '" + path + "'");
}

}  // namespace finreid::data
