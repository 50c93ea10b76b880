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

#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "finreid/binio.hpp"
#include "finreid/data.hpp"
#include "finreid/error.hpp"

namespace finreid::data {

namespace {
constexpr const char* kModule = "data";
using nlohmann::json;

std::chrono::year_month_day parse_ymd(const std::string& s, bool& ok) {
  ok = false;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return {};
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return {};
  const int y = std::stoi(s.substr(0, 4));
  const unsigned m = static_cast<unsigned>(std::stoi(s.substr(5, 2)));
  const unsigned d = static_cast<unsigned>(std::stoi(s.substr(8, 2)));
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  ok = ymd.ok();
  return ymd;
}

bool same_record(const ImageRecord& a, const ImageRecord& b) {
  return a.image_id == b.image_id && a.identity_id == b.identity_id && a.date == b.date &&
         a.image == b.image;
}
}  // namespace

bool valid_date(const std::string& date) {
  bool ok;
  parse_ymd(date, ok);
  return ok;
}

std::string add_days(const std::string& date, int days) {
  bool ok;
  const auto ymd = parse_ymd(date, ok);
  if (!ok) throw Error(kModule, "invalid date '" + date + "'");
  const std::chrono::year_month_day out{std::chrono::sys_days{ymd} + std::chrono::days{days}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(out.year()),
                static_cast<unsigned>(out.month()), static_cast<unsigned>(out.day()));
  return buf;
}

Manifest::Manifest(std::vector<ImageRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::string where = "record " + std::to_string(i + 1);
    if (r.image_id.empty()) throw Error(kModule, where + ": empty image_id");
    if (r.identity_id.empty()) throw Error(kModule, where + ": empty identity_id");
    if (!valid_date(r.date))
      throw Error(kModule, where + ": invalid date '" + r.date + "' (want YYYY-MM-DD)");
    const Image& im = r.image;
    if (im.channels != 1 && im.channels != 3)
      throw Error(kModule, where + ": images need 1 or 3 channels");
    if (im.height == 0 || im.width == 0 || im.pixels.size() != im.channels * im.height * im.width)
      throw Error(kModule, where + ": malformed pixel buffer");
    for (double v : im.pixels)
      if (!(v >= 0.0 && v <= 1.0))
        throw Error(kModule, where + ": pixel value outside [0, 1] in '" + r.image_id + "'");
    if (!by_image_.emplace(r.image_id, i).second)
      throw Error(kModule, where + ": duplicate image_id '" + r.image_id + "'");
    by_identity_[r.identity_id].push_back(i);
  }
}

std::vector<std::string> Manifest::identities() const {
  std::vector<std::string> out;
  out.reserve(by_identity_.size());
  for (const auto& [id, _] : by_identity_) out.push_back(id);
  return out;
}

const std::vector<std::size_t>& Manifest::records_of(const std::string& identity) const {
  auto it = by_identity_.find(identity);
  if (it == by_identity_.end()) throw Error(kModule, "unknown identity '" + identity + "'");
  return it->second;
}

std::vector<std::string> Manifest::dates_of(const std::string& identity) const {
  std::vector<std::string> dates;
  for (std::size_t i : records_of(identity)) dates.push_back(records_[i].date);
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
  return dates;
}

std::size_t Manifest::find(const std::string& image_id) const {
  auto it = by_image_.find(image_id);
  return it == by_image_.end() ? records_.size() : it->second;
}

Manifest Manifest::subset(const std::vector<std::size_t>& indices) const {
  std::vector<ImageRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= records_.size()) throw Error(kModule, "record index out of range");
    out.push_back(records_[i]);
  }
  return Manifest(std::move(out));
}

Manifest Manifest::with_identities(const std::vector<std::string>& identities) const {
  std::vector<char> keep(records_.size(), 0);
  for (const auto& id : identities)
    for (std::size_t i : records_of(id)) keep[i] = 1;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (keep[i]) idx.push_back(i);
  return subset(idx);
}

bool operator==(const Manifest& a, const Manifest& b) {
  return a.records_.size() == b.records_.size() &&
         std::equal(a.records_.begin(), a.records_.end(), b.records_.begin(), same_record);
}

// ---------------------------------------------------------------- base64

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                            (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw Error(kModule, "base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      int d;
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        d = 0;
        ++pad;
      } else {
        d = table[static_cast<unsigned char>(c)];
        if (d < 0 || pad) throw Error(kModule, "invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out += static_cast<char>(v >> 16);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(v & 0xff);
  }
  return out;
}

// ---------------------------------------------------------------- JSONL

Manifest parse_manifest(const std::string& text, const std::string& base_dir) {
  std::vector<ImageRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw Error(kModule, "record is not a JSON object");
      ImageRecord r;
      for (const char* key : {"image_id", "identity_id", "date"})
        if (!j.contains(key) || !j[key].is_string())
          throw Error(kModule, std::string("missing string field '") + key + "'");
      r.image_id = j["image_id"].get<std::string>();
      r.identity_id = j["identity_id"].get<std::string>();
      r.date = j["date"].get<std::string>();
      if (!valid_date(r.date)) throw Error(kModule, "invalid date '" + r.date + "' (want YYYY-MM-DD)");
      auto [it, inserted] = seen.emplace(r.image_id, line_no);
      if (!inserted)
        throw Error(kModule, "duplicate image_id '" + r.image_id + "' (first on line " +
                                 std::to_string(it->second) + ")");
      const bool has_path = j.contains("path"), has_pixels = j.contains("pixels");
      if (has_path == has_pixels) throw Error(kModule, "record needs exactly one of 'path' or 'pixels'");
      if (has_path) {
        std::filesystem::path p = j["path"].get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        r.path = j["path"].get<std::string>();
        if (!std::filesystem::exists(p)) throw Error(kModule, "image file '" + p.string() + "' not found");
        r.image = read_image(p.string());
      } else {
        if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3)
          throw Error(kModule, "inline pixels need 'shape' [C, H, W]");
        const auto shape = j["shape"].get<std::vector<std::size_t>>();
        const std::string raw = base64_decode(j["pixels"].get<std::string>());
        const std::size_t n = shape[0] * shape[1] * shape[2];
        if (raw.size() != n * sizeof(double))
          throw Error(kModule, "pixel buffer holds " + std::to_string(raw.size() / sizeof(double)) +
                                   " values, shape needs " + std::to_string(n));
        r.image = Image(shape[0], shape[1], shape[2]);
        std::memcpy(r.image.pixels.data(), raw.data(), raw.size());
      }
      for (double v : r.image.pixels)
        if (!(v >= 0.0 && v <= 1.0)) throw Error(kModule, "pixel value outside [0, 1]");
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(kModule, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(kModule, where + ": " + (e.module() == kModule ? e.detail() : e.what()));
    }
  }
  if (records.empty()) throw Error(kModule, "manifest has no records");
  return Manifest(std::move(records));
}

Manifest load_manifest(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError(kModule, "manifest '" + path + "' not found");
  const std::string text = binio::read_file(path, kModule);
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_manifest(text, dir.empty() ? "." : dir.string());
}

std::string format_manifest(const Manifest& manifest, bool keep_paths) {
  std::string out;
  for (const auto& r : manifest.records()) {
    json j;
    j["image_id"] = r.image_id;
    j["identity_id"] = r.identity_id;
    j["date"] = r.date;
    if (keep_paths && !r.path.empty()) {
      j["path"] = r.path;
    } else {
      j["shape"] = {r.image.channels, r.image.height, r.image.width};
      j["pixels"] = base64_encode(std::string_view(reinterpret_cast<const char*>(r.image.pixels.data()),
                                                   r.image.pixels.size() * sizeof(double)));
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const Manifest& manifest, const std::string& path, bool keep_paths) {
  binio::write_file_atomic(path, format_manifest(manifest, keep_paths), kModule);
}

// ---------------------------------------------------------------- tensors

Tensor to_tensor(const std::vector<Image>& images, std::size_t side) {
  if (images.empty()) throw Error(kModule, "no images to stack");
  const std::size_t c = images.front().channels;
  std::vector<double> values;
  values.reserve(images.size() * c * side * side);
  for (const auto& im : images) {
    if (im.channels != c) throw Error(kModule, "images mix channel counts");
    if (im.height == side && im.width == side) {
      values.insert(values.end(), im.pixels.begin(), im.pixels.end());
    } else {
      const Image r = resize(im, side);
      values.insert(values.end(), r.pixels.begin(), r.pixels.end());
    }
  }
  return Tensor({images.size(), c, side, side}, std::move(values));
}

Tensor to_tensor(const Manifest& manifest, const std::vector<std::size_t>& indices, std::size_t side) {
  std::vector<Image> images;
  images.reserve(indices.size());
  for (std::size_t i : indices) images.push_back(manifest[i].image);
  return to_tensor(images, side);
}

}  // namespace finreid::data
