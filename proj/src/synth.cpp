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

#include <cmath>
#include <cstdio>
#include <numbers>

#include "finreid/data.hpp"
#include "finreid/error.hpp"

namespace finreid::data {

namespace {
constexpr const char* kModule = "data";
constexpr std::size_t kSuper = 4;  // supersampling per axis

struct Notch {
  double height, depth, half_width;
};

struct Scar {
  double u, v, radius;
};

// Identity-level fin geometry in unit coordinates (u right, v down).
struct FinShape {
  double base_v, base_left, base_right, tip_u, tip_v;
  double lead_power, trail_concavity, back_curve;
  std::vector<Notch> notches;
  std::vector<Scar> scars;

  double height_of(double v) const { return (base_v - v) / (base_v - tip_v); }
  double leading(double h) const { return base_left + (tip_u - base_left) * std::pow(h, lead_power); }
  double trailing(double h) const {
    double x = tip_u + (base_right - tip_u) * (1.0 - h) - trail_concavity * std::sin(std::numbers::pi * h);
    for (const auto& n : notches) {
      const double t = 1.0 - std::abs(h - n.height) / n.half_width;
      if (t > 0.0) x -= n.depth * t;
    }
    return x;
  }
  bool inside(double u, double v) const {
    if (v >= base_v + back_curve * (u - 0.5) * (u - 0.5)) return true;  // the back below the fin
    if (v < tip_v) return false;
    // Below the base line the fin flares straight down into the back.
    const double h = std::max(0.0, height_of(v));
    return u >= leading(h) && u <= trailing(h);
  }
  bool on_scar(double u, double v) const {
    for (const auto& s : scars)
      if ((u - s.u) * (u - s.u) + (v - s.v) * (v - s.v) <= s.radius * s.radius) return true;
    return false;
  }
};

FinShape make_shape(std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::stream(seed, 2 * static_cast<std::uint64_t>(index));
  FinShape f;
  f.base_v = rng.uniform(0.80, 0.88);
  f.base_left = rng.uniform(0.06, 0.22);
  f.base_right = rng.uniform(0.70, 0.92);
  f.tip_u = rng.uniform(0.50, 0.85);
  f.tip_v = rng.uniform(0.08, 0.25);
  f.lead_power = rng.uniform(1.2, 2.4);
  f.trail_concavity = rng.uniform(0.0, 0.14);
  f.back_curve = rng.uniform(0.1, 0.4);

  // Notches spread along the trailing edge with a minimum spacing.
  const std::size_t count = 2 + static_cast<std::size_t>(rng.below(4));
  const double slot = 0.8 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    Notch n;
    n.height = 0.1 + slot * (static_cast<double>(i) + rng.uniform(0.2, 0.8));
    n.depth = rng.uniform(0.04, 0.13);
    n.half_width = rng.uniform(0.03, std::min(0.08, slot / 2.0));
    f.notches.push_back(n);
  }
  const std::size_t scars = static_cast<std::size_t>(rng.below(3));
  for (std::size_t i = 0; i < scars; ++i) {
    const double h = rng.uniform(0.15, 0.6);
    const double l = f.leading(h), t = f.trailing(h);
    Scar s;
    s.u = l + (t - l) * rng.uniform(0.3, 0.7);
    s.v = f.base_v - h * (f.base_v - f.tip_v);
    s.radius = rng.uniform(0.03, 0.06);
    f.scars.push_back(s);
  }
  return f;
}

// Coverage and scar fraction of one pixel under a similarity transform
// about the image centre (angle in degrees, isotropic scale).
void coverage(const FinShape& f, std::size_t side, std::size_t x, std::size_t y, double angle,
              double scale, double& fin, double& scar) {
  const double t = -angle * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const double n = static_cast<double>(side);
  std::size_t hits = 0, scar_hits = 0;
  for (std::size_t sy = 0; sy < kSuper; ++sy)
    for (std::size_t sx = 0; sx < kSuper; ++sx) {
      const double px = (static_cast<double>(x) + (static_cast<double>(sx) + 0.5) / kSuper) / n - 0.5;
      const double py = (static_cast<double>(y) + (static_cast<double>(sy) + 0.5) / kSuper) / n - 0.5;
      const double u = 0.5 + (ct * px - st * py) / scale;
      const double v = 0.5 + (st * px + ct * py) / scale;
      if (f.inside(u, v)) {
        ++hits;
        if (f.on_scar(u, v)) ++scar_hits;
      }
    }
  const double total = static_cast<double>(kSuper * kSuper);
  fin = static_cast<double>(hits) / total;
  scar = static_cast<double>(scar_hits) / total;
}

std::string padded(const std::string& prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + buf;
}
}  // namespace

Image canonical_silhouette(std::uint64_t seed, std::size_t index, std::size_t side) {
  const FinShape f = make_shape(seed, index);
  Image out(1, side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      double fin, scar;
      coverage(f, side, x, y, 0.0, 1.0, fin, scar);
      out.at(0, y, x) = fin;
    }
  return out;
}

Manifest synth_generate(const SynthConfig& c) {
  if (c.num_identities < 1 || c.images_per_identity < 1 || c.days_per_identity < 1)
    throw Error(kModule, "synthetic counts must be at least 1");
  if (c.side < 8) throw Error(kModule, "synthetic side must be at least 8");
  if (c.channels != 1 && c.channels != 3) throw Error(kModule, "synthetic images need 1 or 3 channels");
  if (!valid_date(c.start_date)) throw Error(kModule, "invalid start date '" + c.start_date + "'");

  std::vector<ImageRecord> records;
  records.reserve(c.num_identities * c.images_per_identity);
  for (std::size_t i = 0; i < c.num_identities; ++i) {
    const std::size_t index = c.first_index + i;
    const FinShape shape = make_shape(c.seed, index);
    Rng rng = Rng::stream(c.seed, 2 * static_cast<std::uint64_t>(index) + 1);
    const std::string identity = padded(c.id_prefix, index, 4);

    struct Day {
      std::string date;
      double light;
      double tint[3];
    };
    std::vector<Day> days;
    for (std::size_t d = 0; d < c.days_per_identity; ++d) {
      Day day;
      day.date = add_days(c.start_date, static_cast<int>(index % 29 + 11 * d));
      day.light = rng.uniform(-0.08, 0.08);
      for (double& t : day.tint) t = rng.uniform(-0.04, 0.04);
      days.push_back(day);
    }

    for (std::size_t j = 0; j < c.images_per_identity; ++j) {
      const Day& day = days[j % c.days_per_identity];
      const double angle = rng.uniform(-8.0, 8.0);
      const double scale = rng.uniform(0.9, 1.1);
      const double brightness = rng.uniform(-0.05, 0.05);
      const double bg_level = rng.uniform(0.55, 0.75);
      const double bg_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double bg_slope = rng.uniform(0.0, 0.15);
      const double fin_level = 0.22 + brightness;

      Image im(c.channels, c.side, c.side);
      const double n = static_cast<double>(c.side);
      for (std::size_t y = 0; y < c.side; ++y)
        for (std::size_t x = 0; x < c.side; ++x) {
          double fin, scar;
          coverage(shape, c.side, x, y, angle, scale, fin, scar);
          const double gx = (static_cast<double>(x) + 0.5) / n - 0.5;
          const double gy = (static_cast<double>(y) + 0.5) / n - 0.5;
          const double bg = bg_level + brightness + bg_slope * (std::cos(bg_dir) * gx + std::sin(bg_dir) * gy);
          const double value = fin * fin_level + scar * 0.35 + (1.0 - fin) * bg + day.light;
          for (std::size_t ch = 0; ch < c.channels; ++ch) {
            // Colour variant: bluish water and a neutral grey fin with the day's tint.
            double v = value;
            if (c.channels == 3) v += day.tint[ch] + (1.0 - fin) * (static_cast<double>(ch) - 1.0) * 0.08;
            im.at(ch, y, x) = std::clamp(v + rng.normal(0.0, 0.02), 0.0, 1.0);
          }
        }
      ImageRecord r;
      r.image_id = padded(identity + "_", j, 2);
      r.identity_id = identity;
      r.date = day.date;
      r.image = std::move(im);
      records.push_back(std::move(r));
    }
  }
  return Manifest(std::move(records));
}

}  // namespace finreid::data
