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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace finreid::data {

/// Planar C x H x W image with values in [0, 1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Bilinear resample to side x side (pixel-centre aligned, edge clamped).
Image resize(const Image& image, std::size_t side);

/// Rotation about the image centre by `degrees` (counter-clockwise),
/// bilinear sampling, out-of-frame samples replicate the nearest edge pixel.
Image rotate(const Image& image, double degrees);

/// Hue shift by `delta` on a [0, 1) hue circle.
Image adjust_hue(const Image& image, double delta);
/// Saturation scaled by `factor`, clamped to [0, 1].
Image adjust_saturation(const Image& image, double factor);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

Image read_pgm(const std::string& path);
void write_pgm(const Image& image, const std::string& path);
Image read_png(const std::string& path);
std::string encode_png(const Image& image);
void write_png(const Image& image, const std::string& path);
/// Dispatches on the file extension (.png, .pgm).
Image read_image(const std::string& path);

}  // namespace finreid::data
