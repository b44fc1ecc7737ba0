// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>

namespace vsm {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used to fold string identifiers into stream keys.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Counter-based random stream. A stream is fully determined by its key, and
/// the n-th draw depends only on (key, n), so streams derived for different
/// (seed, clip, copy, op) tuples never interact regardless of evaluation
/// order or worker count.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit RandomStream(std::uint64_t key = 0) noexcept : key_(mix64(key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  /// Child stream keyed by this stream's key and `tag`. Does not advance this stream.
  constexpr RandomStream derive(std::uint64_t tag) const noexcept {
    return RandomStream(key_ ^ mix64(tag + 0x632BE59BD9B4E019ULL));
  }
  constexpr RandomStream derive(std::string_view tag) const noexcept {
    return derive(hash_string(tag));
  }

  constexpr result_type operator()() noexcept { return next_u64(); }

  constexpr std::uint64_t next_u64() noexcept {
    return mix64(key_ ^ mix64(counter_++));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo) + 1);
    const auto r = (static_cast<unsigned __int128>(next_u64()) * span) >> 64;
    return lo + static_cast<std::int64_t>(r);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates; portable, unlike std::shuffle whose draw pattern is unspecified.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) noexcept {
    const auto n = static_cast<std::int64_t>(last - first);
    for (std::int64_t i = n - 1; i > 0; --i) {
      const auto j = uniform_int(0, i);
      using std::swap;
      swap(first[i], first[j]);
    }
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream keyed by a seed and any number of integer or string parts.
template <class... Parts>
RandomStream make_stream(std::uint64_t seed, const Parts&... parts) {
  RandomStream s(seed);
  ((s = s.derive(parts)), ...);
  return s;
}

}  // namespace vsm
