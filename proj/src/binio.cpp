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

#include "finreid/binio.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "finreid/error.hpp"

namespace finreid::binio {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Writer::fixed(std::string_view s, std::size_t width) {
  if (s.size() > width)
    throw IoError("binio", "field '" + std::string(s) + "' exceeds " + std::to_string(width) +
                               " bytes");
  bytes(s);
  buf_.append(width - s.size(), '\0');
}

void Writer::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) u64(d);
  f64s(t.values());
}

std::string_view Reader::bytes(std::size_t n) {
  if (n > remaining())
    throw IoError(module_, "truncated data: need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_) + ", have " + std::to_string(remaining()));
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string Reader::str() {
  const auto n = u64();
  return std::string(bytes(n));
}

std::string Reader::fixed(std::size_t width) {
  auto raw = bytes(width);
  auto end = raw.find('\0');
  return std::string(raw.substr(0, end));
}

std::vector<double> Reader::f64s(std::size_t n) {
  if (n > remaining() / sizeof(double)) bytes(n * sizeof(double));
  std::vector<double> v(n);
  std::memcpy(v.data(), bytes(n * sizeof(double)).data(), n * sizeof(double));
  return v;
}

Tensor Reader::tensor() {
  const auto rank = u32();
  if (rank > 8) throw IoError(module_, "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = u64();
    if (d == 0 || d > (std::size_t{1} << 32)) throw IoError(module_, "implausible tensor extent");
    n *= d;
  }
  return Tensor(std::move(shape), f64s(n));
}

std::string read_file(const std::string& path, const std::string& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(module, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view bytes, const std::string& module) {
  const std::string tmp = path + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError(module, "cannot create '" + tmp + "'");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw IoError(module, "write failed for '" + tmp + "'");
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(module, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace finreid::binio
