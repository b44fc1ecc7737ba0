// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Waveform to normalized log-mel spectrogram.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vsm/array2d.hpp"
#include "vsm/error.hpp"
#include "vsm/fft.hpp"

namespace vsm {

enum class Label : std::uint8_t { Stable = 0, Unstable = 1 };

constexpr std::string_view to_string(Label l) { return l == Label::Stable ? "Stable" : "Unstable"; }

inline Label label_from_string(std::string_view s) {
  if (s == "Stable") return Label::Stable;
  if (s == "Unstable") return Label::Unstable;
  fail(ErrorKind::InputError, "unknown label '" + std::string(s) + "'");
}

struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate = 48000;
  std::string subject_id;
  Label label = Label::Stable;
  std::string clip_id;

  std::size_t duration_samples() const noexcept { return samples.size(); }
};

enum class WindowKind : std::uint8_t { Hann, Rectangular };

struct SpectrogramParams {
  std::uint32_t sample_rate = 48000;
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  std::size_t n_mels = 128;
  double f_min = 0.0;
  double f_max = 8000.0;
  WindowKind window = WindowKind::Hann;
  bool center_pad = true;
  double db_floor = -80.0;

  void validate() const {
    require(sample_rate > 0, ErrorKind::InvalidParam, "sample_rate must be positive");
    require(n_fft >= 2, ErrorKind::InvalidParam, "n_fft must be at least 2");
    require(hop >= 1 && hop <= n_fft, ErrorKind::InvalidParam, "hop must lie in [1, n_fft]");
    require(n_mels >= 1, ErrorKind::InvalidParam, "n_mels must be positive");
    require(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0, ErrorKind::InvalidParam,
            "frequency range must satisfy 0 <= f_min < f_max <= sample_rate/2");
    require(db_floor < 0.0, ErrorKind::InvalidParam, "db_floor must be negative");
  }

  std::size_t n_bins() const noexcept { return n_fft / 2 + 1; }

  std::size_t frames_for(std::size_t n_samples) const noexcept {
    if (center_pad) return 1 + n_samples / hop;
    if (n_samples <= n_fft) return 1;
    return 1 + (n_samples - n_fft) / hop;
  }

  friend bool operator==(const SpectrogramParams&, const SpectrogramParams&) = default;
};

struct MelSpectrogram {
  Array2D<float> data;  // [n_mels x n_frames]
  SpectrogramParams params;
  std::string source_clip_id;
  std::string subject_id;
  Label label = Label::Stable;
  bool augmented = false;
  // Set when an augmentation op could not be applied (e.g. unsatisfiable erase geometry).
  bool erase_skipped = false;

  std::size_t n_mels() const noexcept { return data.rows(); }
  std::size_t n_frames() const noexcept { return data.cols(); }
};

/// Peak-normalizes raw samples so max |x| == 1. All-zero input passes through unchanged.
inline AudioClip normalize_clip(std::span<const double> raw, std::uint32_t sample_rate,
                                std::string subject_id, Label label, std::string clip_id) {
  require(!raw.empty(), ErrorKind::InvalidAudio, "empty clip '" + clip_id + "'");
  require(sample_rate > 0, ErrorKind::InvalidAudio, "sample rate must be positive");
  double peak = 0.0;
  for (double x : raw) {
    require(std::isfinite(x), ErrorKind::InvalidAudio, "non-finite sample in '" + clip_id + "'");
    peak = std::max(peak, std::abs(x));
  }
  AudioClip clip{std::vector<double>(raw.begin(), raw.end()), sample_rate, std::move(subject_id),
                 label, std::move(clip_id)};
  if (peak > 0.0) {
    for (double& x : clip.samples) x /= peak;
  }
  return clip;
}

/// Zero-pads or truncates to exactly n samples.
inline void fit_duration(AudioClip& clip, std::size_t n) { clip.samples.resize(n, 0.0); }

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::Hann) {
    // Periodic Hann, the usual choice for spectral analysis.
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

namespace detail {

// Reflection about the end samples (no edge repeat), folded as often as needed.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace detail

/// Magnitude STFT, shape [(n_fft/2 + 1) x n_frames].
inline Array2D<double> stft_magnitude(const AudioClip& clip, const SpectrogramParams& params) {
  params.validate();
  require(clip.sample_rate == params.sample_rate, ErrorKind::ParamMismatch,
          "clip sample rate " + std::to_string(clip.sample_rate) + " != params sample rate " +
              std::to_string(params.sample_rate));
  require(!clip.samples.empty(), ErrorKind::InvalidAudio, "empty clip");

  const auto& x = clip.samples;
  const std::size_t n = x.size();
  const std::size_t n_fft = params.n_fft;
  const std::size_t frames = params.frames_for(n);
  const auto window = make_window(params.window, n_fft);
  const auto offset = params.center_pad ? static_cast<std::ptrdiff_t>(n_fft / 2) : 0;

  Array2D<double> out(params.n_bins(), frames);
  std::vector<double> frame(n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * params.hop) - offset;
    for (std::size_t i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
      double v;
      if (params.center_pad) {
        v = x[detail::reflect_index(idx, n)];
      } else {
        v = idx < static_cast<std::ptrdiff_t>(n) ? x[static_cast<std::size_t>(idx)] : 0.0;
      }
      frame[i] = v * window[i];
    }
    const auto mags = fft::real_magnitudes(frame);
    for (std::size_t k = 0; k < mags.size(); ++k) out(k, t) = mags[k];
  }
  return out;
}

inline double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular, unnormalized HTK-mel filters, shape [n_mels x (n_fft/2 + 1)].
inline Array2D<double> mel_filterbank(const SpectrogramParams& params) {
  params.validate();
  const std::size_t bins = params.n_bins();
  const double mel_lo = hz_to_mel(params.f_min);
  const double mel_hi = hz_to_mel(params.f_max);
  std::vector<double> edges(params.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(params.n_mels + 1));
  // Pin the outer edges so float round-off in the mel round trip cannot shrink the span.
  edges.front() = params.f_min;
  edges.back() = params.f_max;

  Array2D<double> fb(params.n_mels, bins);
  const double bin_hz = static_cast<double>(params.sample_rate) / static_cast<double>(params.n_fft);
  for (std::size_t m = 0; m < params.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      fb(m, k) = w;
      any = any || w > 0.0;
    }
    require(any, ErrorKind::DegenerateFilterbank,
            "mel filter " + std::to_string(m) + " covers no FFT bin; reduce n_mels or raise n_fft");
  }
  return fb;
}

/// 10*log10(p / max p) clamped to [db_floor, 0], then mapped affinely onto [0, 1].
/// An all-zero input maps to all zeros.
template <class T>
Array2D<T> normalize_db(const Array2D<T>& power, double db_floor) {
  Array2D<T> out(power.rows(), power.cols());
  double max_p = 0.0;
  for (T v : power.data()) max_p = std::max(max_p, static_cast<double>(v));
  if (max_p <= 0.0) return out;
  constexpr double tiny = 1e-30;
  for (std::size_t i = 0; i < power.size(); ++i) {
    const double p = std::max(static_cast<double>(power.data()[i]), tiny);
    const double db = std::clamp(10.0 * std::log10(p / max_p), db_floor, 0.0);
    out.data()[i] = static_cast<T>((db - db_floor) / -db_floor);
  }
  return out;
}

/// Filterbank precomputed once and reused across clips with identical parameters.
class MelExtractor {
 public:
  explicit MelExtractor(SpectrogramParams params)
      : params_(params), filterbank_(mel_filterbank(params)) {}

  const SpectrogramParams& params() const noexcept { return params_; }
  const Array2D<double>& filterbank() const noexcept { return filterbank_; }

  MelSpectrogram operator()(const AudioClip& clip) const {
    const auto mag = stft_magnitude(clip, params_);
    const std::size_t frames = mag.cols();
    const std::size_t bins = mag.rows();
    Array2D<double> mel(params_.n_mels, frames);
    for (std::size_t m = 0; m < params_.n_mels; ++m) {
      const auto w = filterbank_.row(m);
      for (std::size_t k = 0; k < bins; ++k) {
        if (w[k] == 0.0) continue;
        const auto src = mag.row(k);
        auto dst = mel.row(m);
        for (std::size_t t = 0; t < frames; ++t) dst[t] += w[k] * src[t] * src[t];
      }
    }
    const auto normalized = normalize_db(mel, params_.db_floor);
    MelSpectrogram out;
    out.data = Array2D<float>(params_.n_mels, frames);
    for (std::size_t i = 0; i < normalized.size(); ++i)
      out.data.data()[i] = static_cast<float>(normalized.data()[i]);
    out.params = params_;
    out.source_clip_id = clip.clip_id;
    out.subject_id = clip.subject_id;
    out.label = clip.label;
    return out;
  }

 private:
  SpectrogramParams params_;
  Array2D<double> filterbank_;
};

inline MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramParams& params) {
  return MelExtractor(params)(clip);
}

}  // namespace vsm
