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

// Little-endian binary encoding helpers shared by the checkpoint and the
// catalogue store formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "finreid/tensor.hpp"

namespace finreid::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);

class Writer {
 public:
  void u32(std::uint32_t v) { put(&v, sizeof v); }
  void u64(std::uint64_t v) { put(&v, sizeof v); }
  void f64(double v) { put(&v, sizeof v); }
  void bytes(std::string_view s) { buf_.append(s); }
  /// u64 length prefix followed by the bytes.
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  /// Fixed-width, zero-padded field; throws if `s` does not fit.
  void fixed(std::string_view s, std::size_t width);
  void f64s(const std::vector<double>& v) { put(v.data(), v.size() * sizeof(double)); }
  void tensor(const Tensor& t);

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void put(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

/// Bounds-checked reader; every short read throws IoError(module, ...).
class Reader {
 public:
  Reader(std::string_view data, std::string module) : data_(data), module_(std::move(module)) {}

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  std::string_view bytes(std::size_t n);
  std::string str();
  std::string fixed(std::size_t width);
  std::vector<double> f64s(std::size_t n);
  Tensor tensor();

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, bytes(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view data_;
  std::string module_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path, const std::string& module);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::string& path, std::string_view bytes, const std::string& module);

}  // namespace finreid::binio
