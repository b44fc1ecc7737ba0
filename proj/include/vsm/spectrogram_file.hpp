// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Flat tensor container (".vstn") and grayscale PNG export for spectrograms.
//
// VSTN layout, all integers little-endian:
//   "VSTN" | u32 ndims | u32 dims[ndims] | f32 payload[prod(dims)] | u32 crc32
// The CRC covers every preceding byte.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsm/array2d.hpp"
#include "vsm/error.hpp"
#include "vsm/io.hpp"

namespace vsm {

struct FlatTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

inline io::Bytes encode_vstn(const FlatTensor& t) {
  std::size_t n = 1;
  for (auto d : t.dims) n *= d;
  require(n == t.values.size(), ErrorKind::ShapeError, "tensor dims do not match payload length");
  io::Writer w;
  w.raw("VSTN");
  w.u32(static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) w.u32(d);
  for (float v : t.values) w.f32(v);
  w.u32(io::crc32(w.bytes()));
  return std::move(w.bytes());
}

inline FlatTensor decode_vstn(const io::Bytes& b) {
  constexpr auto bad = ErrorKind::CorruptCheckpoint;
  require(b.size() >= 12, bad, "tensor file too short");
  const std::uint32_t stored = io::Reader(b.data() + b.size() - 4, 4, bad).u32();
  require(stored == io::crc32(b.data(), b.size() - 4), bad, "tensor CRC mismatch");
  io::Reader r(b.data(), b.size() - 4, bad);
  require(r.raw(4) == "VSTN", bad, "bad tensor magic");
  FlatTensor t;
  const std::uint32_t nd = r.u32();
  require(nd <= 8, bad, "implausible tensor rank");
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < nd; ++i) {
    t.dims.push_back(r.u32());
    n *= t.dims.back();
  }
  require(r.remaining() == n * 4, bad, "tensor payload length mismatch");
  t.values.resize(n);
  for (auto& v : t.values) v = r.f32();
  return t;
}

inline void save_spectrogram(const std::filesystem::path& path, const Array2D<float>& a) {
  FlatTensor t{{static_cast<std::uint32_t>(a.rows()), static_cast<std::uint32_t>(a.cols())}, a.data()};
  io::write_file_atomic(path, encode_vstn(t));
}

inline Array2D<float> load_spectrogram(const std::filesystem::path& path) {
  const auto t = decode_vstn(io::read_file(path));
  require(t.dims.size() == 2, ErrorKind::ShapeError, path.string() + " is not a 2-D tensor");
  Array2D<float> a(t.dims[0], t.dims[1]);
  a.data() = t.values;
  return a;
}

/// 8-bit grayscale PNG; values scaled by 255, image row 0 = array row 0
/// (the lowest mel band).
inline io::Bytes encode_png_gray(const Array2D<float>& a) {
  const auto w = static_cast<std::uint32_t>(a.cols());
  const auto h = static_cast<std::uint32_t>(a.rows());
  std::vector<unsigned char> raw;
  raw.reserve(std::size_t{h} * (w + 1));
  for (std::uint32_t r = 0; r < h; ++r) {
    raw.push_back(0);  // filter: none
    for (std::uint32_t c = 0; c < w; ++c) {
      const float v = std::clamp(a(r, c), 0.0f, 1.0f);
      raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(zlen);
  require(compress(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size())) == Z_OK, ErrorKind::IoError,
          "zlib compression failed");
  z.resize(zlen);

  io::Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  auto be32 = [&](std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto chunk = [&](const char* type, const std::vector<unsigned char>& body) {
    be32(static_cast<std::uint32_t>(body.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    be32(io::crc32(out.data() + start, out.size() - start));
  };
  std::vector<unsigned char> ihdr;
  for (std::uint32_t v : {w, h})
    for (int i = 3; i >= 0; --i) ihdr.push_back(static_cast<unsigned char>(v >> (8 * i)));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale, no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  return out;
}

}  // namespace vsm
