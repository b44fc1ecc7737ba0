// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vsm/error.hpp"

namespace vsm::wav {

struct Waveform {
  std::vector<double> samples;  // mono
  std::uint32_t sample_rate = 0;
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}
inline void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Decodes RIFF/WAVE with 16-bit PCM or 32-bit float samples. Multi-channel
/// input is downmixed by averaging channels.
inline Waveform decode(const std::vector<unsigned char>& bytes) {
  using detail::le16;
  using detail::le32;
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorKind::InvalidAudio, "not a RIFF/WAVE stream");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + len <= bytes.size() || std::memcmp(chunk, "data", 4) == 0, ErrorKind::InvalidAudio,
            "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(len >= 16, ErrorKind::InvalidAudio, "short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = le16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1u);
  }
  require(data != nullptr && channels > 0 && rate > 0, ErrorKind::InvalidAudio, "missing fmt or data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  require(pcm16 || f32, ErrorKind::InvalidAudio,
          "unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bit");
  const std::size_t frame_bytes = std::size_t{channels} * (bits / 8);
  const std::size_t frames = data_len / frame_bytes;
  Waveform out;
  out.sample_rate = rate;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * (bits / 8);
      if (pcm16) {
        acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        acc += static_cast<double>(std::bit_cast<float>(le32(p)));
      }
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

inline Waveform read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

/// Mono 16-bit PCM encoding; samples are clamped to [-1, 1].
inline std::vector<unsigned char> encode_pcm16(const std::vector<double>& samples, std::uint32_t rate) {
  using detail::put16;
  using detail::put32;
  std::vector<unsigned char> b;
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, rate);
  put32(b, rate * 2);
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_len);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L));
    put16(b, static_cast<std::uint16_t>(q));
  }
  return b;
}

/// Mono 32-bit float encoding.
inline std::vector<unsigned char> encode_f32(const std::vector<double>& samples, std::uint32_t rate) {
  using detail::put16;
  using detail::put32;
  std::vector<unsigned char> b;
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 4);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 3);
  put16(b, 1);
  put32(b, rate);
  put32(b, rate * 4);
  put16(b, 4);
  put16(b, 32);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_len);
  for (double s : samples) put32(b, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
  return b;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::IoError, "short write to " + path.string());
}

}  // namespace vsm::wav
