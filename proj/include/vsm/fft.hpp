// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace vsm::fft {

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && std::has_single_bit(n); }

/// In-place iterative radix-2 FFT (forward, unnormalized). Size must be a power of two.
inline void radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddles computed directly rather than by recurrence to keep error O(eps log n).
  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto w = twiddle[k * stride];
        const auto u = a[i + k];
        const auto v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

/// Magnitudes of DFT bins 0..n/2 of a real frame. Power-of-two sizes use the
/// radix-2 path; anything else falls back to direct summation.
inline std::vector<double> real_magnitudes(std::span<const double> frame) {
  const std::size_t n = frame.size();
  const std::size_t bins = n / 2 + 1;
  std::vector<double> out(bins);
  if (is_power_of_two(n)) {
    std::vector<std::complex<double>> buf(frame.begin(), frame.end());
    radix2(buf);
    for (std::size_t k = 0; k < bins; ++k) out[k] = std::abs(buf[k]);
    return out;
  }
  for (std::size_t k = 0; k < bins; ++k) {
    std::complex<double> acc{};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += frame[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::abs(acc);
  }
  return out;
}

}  // namespace vsm::fft
