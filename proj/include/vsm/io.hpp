// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vsm/error.hpp"

namespace vsm::io {

using Bytes = std::vector<unsigned char>;

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large payloads.
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t crc32(const Bytes& b) { return crc32(b.data(), b.size()); }

/// 64-bit FNV-1a over raw bytes, rendered as 16 hex digits. Used for content
/// fingerprints in run logs and checkpoint probe records.
inline std::uint64_t fnv1a(const unsigned char* p, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

template <class T>
std::string hash_values(const std::vector<T>& v) {
  return hex64(fnv1a(reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(T)));
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

/// Writes to a sibling temp file then renames over the target, so readers see
/// either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, const unsigned char* data, std::size_t n) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    out.flush();
    require(static_cast<bool>(out), ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::IoError, "rename to " + path.string() + " failed: " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const Bytes& b) {
  write_file_atomic(path, b.data(), b.size());
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view s) {
  write_file_atomic(path, reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

/// Little-endian byte sink/source shared by the binary container formats.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  std::size_t size() const noexcept { return buf_.size(); }
  Bytes& bytes() noexcept { return buf_; }

 private:
  Bytes buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n, ErrorKind on_short)
      : p_(data), n_(n), kind_(on_short) {}

  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(u32()); }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    require(k <= n_ - pos_, kind_, "unexpected end of data at offset " + std::to_string(pos_));
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  ErrorKind kind_;
};

}  // namespace vsm::io
