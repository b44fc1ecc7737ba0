// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Training-only spectrogram augmentation: masking, noise and erasing ops
// composed in a per-copy random order under a counter-based seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vsm/audio.hpp"
#include "vsm/error.hpp"
#include "vsm/rng.hpp"

namespace vsm {

enum class AugmentKind : std::uint8_t { TimeMask, FreqMask, SpecAugment, GaussianNoise, RandomErase };

constexpr std::string_view to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::TimeMask: return "TimeMask";
    case AugmentKind::FreqMask: return "FreqMask";
    case AugmentKind::SpecAugment: return "SpecAugment";
    case AugmentKind::GaussianNoise: return "GaussianNoise";
    case AugmentKind::RandomErase: return "RandomErase";
  }
  return "?";
}

inline AugmentKind augment_kind_from_string(std::string_view s) {
  for (auto k : {AugmentKind::TimeMask, AugmentKind::FreqMask, AugmentKind::SpecAugment,
                 AugmentKind::GaussianNoise, AugmentKind::RandomErase})
    if (to_string(k) == s) return k;
  fail(ErrorKind::ConfigError, "unknown augmentation kind '" + std::string(s) + "'");
}

struct AugmentOp {
  AugmentKind kind = AugmentKind::TimeMask;
  double probability = 0.5;
  // Mask widths as a fraction of frames / mel bins; the drawn width is uniform in [1, max].
  double time_width_fraction = 0.10;
  double freq_width_fraction = 0.10;
  int time_masks = 2;
  int freq_masks = 2;
  // Gaussian sigma is drawn uniformly from this range once per copy.
  double sigma_lo = 0.01;
  double sigma_hi = 0.05;
  double area_lo = 0.02;
  double area_hi = 0.20;
  double aspect_lo = 0.3;
  double aspect_hi = 3.3;

  void validate() const {
    require(probability >= 0.0 && probability <= 1.0, ErrorKind::InvalidParam, "probability must lie in [0, 1]");
    require(time_width_fraction > 0.0 && time_width_fraction <= 1.0 && freq_width_fraction > 0.0 &&
                freq_width_fraction <= 1.0,
            ErrorKind::InvalidParam, "mask width fractions must lie in (0, 1]");
    require(time_masks >= 1 && freq_masks >= 1, ErrorKind::InvalidParam, "mask counts must be >= 1");
    require(sigma_lo >= 0.0 && sigma_lo <= sigma_hi, ErrorKind::InvalidParam, "sigma range invalid");
    require(area_lo > 0.0 && area_lo <= area_hi && area_hi < 1.0, ErrorKind::InvalidParam,
            "area range must satisfy 0 < lo <= hi < 1");
    require(aspect_lo > 0.0 && aspect_lo <= aspect_hi, ErrorKind::InvalidParam, "aspect range invalid");
  }
};

struct AugmentPipeline {
  std::vector<AugmentOp> ops;
  std::uint64_t seed = 0;
  int copies_per_sample = 3;

  static AugmentPipeline defaults(std::uint64_t seed) {
    AugmentPipeline p;
    p.seed = seed;
    for (auto k : {AugmentKind::TimeMask, AugmentKind::FreqMask, AugmentKind::SpecAugment,
                   AugmentKind::GaussianNoise, AugmentKind::RandomErase})
      p.ops.push_back(AugmentOp{.kind = k});
    return p;
  }

  void validate() const {
    require(!ops.empty(), ErrorKind::InvalidParam, "augmentation pipeline has no ops");
    require(copies_per_sample >= 1, ErrorKind::InvalidParam, "copies_per_sample must be positive");
    for (const auto& op : ops) op.validate();
  }
};

namespace detail {

inline std::size_t width_bound(double fraction, std::size_t extent) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(extent))));
}

}  // namespace detail

inline MelSpectrogram time_mask(MelSpectrogram spec, std::size_t max_width_frames, RandomStream& rng) {
  const std::size_t frames = spec.n_frames();
  require(max_width_frames > 0 && max_width_frames <= frames, ErrorKind::InvalidMaskWidth,
          "time mask width bound " + std::to_string(max_width_frames) + " outside [1, " +
              std::to_string(frames) + "]");
  const auto width = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_width_frames)));
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(frames - width)));
  for (std::size_t r = 0; r < spec.n_mels(); ++r)
    std::fill_n(spec.data.row(r).begin() + static_cast<std::ptrdiff_t>(start), width, 0.0f);
  spec.augmented = true;
  return spec;
}

inline MelSpectrogram freq_mask(MelSpectrogram spec, std::size_t max_width_bins, RandomStream& rng) {
  const std::size_t bins = spec.n_mels();
  require(max_width_bins > 0 && max_width_bins <= bins, ErrorKind::InvalidMaskWidth,
          "frequency mask width bound " + std::to_string(max_width_bins) + " outside [1, " +
              std::to_string(bins) + "]");
  const auto width = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_width_bins)));
  const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(bins - width)));
  for (std::size_t r = start; r < start + width; ++r) std::ranges::fill(spec.data.row(r), 0.0f);
  spec.augmented = true;
  return spec;
}

/// `time_masks` time masks followed by `freq_masks` frequency masks, all drawn from `rng` in order.
inline MelSpectrogram spec_augment(MelSpectrogram spec, int time_masks, int freq_masks, std::size_t max_time_width,
                                   std::size_t max_freq_width, RandomStream& rng) {
  require(time_masks >= 1 && freq_masks >= 1, ErrorKind::InvalidParam, "SpecAugment needs at least one mask of each kind");
  for (int i = 0; i < time_masks; ++i) spec = time_mask(std::move(spec), max_time_width, rng);
  for (int i = 0; i < freq_masks; ++i) spec = freq_mask(std::move(spec), max_freq_width, rng);
  return spec;
}

inline MelSpectrogram gaussian_noise(MelSpectrogram spec, double sigma, RandomStream& rng) {
  require(sigma >= 0.0, ErrorKind::InvalidParam, "negative noise sigma");
  spec.augmented = true;
  if (sigma == 0.0) return spec;
  for (float& v : spec.data.data())
    v = static_cast<float>(std::clamp(static_cast<double>(v) + sigma * rng.normal(), 0.0, 1.0));
  return spec;
}

/// Zeroes one axis-aligned rectangle whose area fraction and aspect ratio
/// (height / width, in cells) are uniform in the given ranges. Gives up after
/// ten unsatisfiable draws, leaving the data untouched and setting `erase_skipped`.
inline MelSpectrogram random_erase(MelSpectrogram spec, std::pair<double, double> area_range,
                                   std::pair<double, double> aspect_range, RandomStream& rng) {
  const auto [area_lo, area_hi] = area_range;
  const auto [aspect_lo, aspect_hi] = aspect_range;
  require(area_lo > 0.0 && area_lo <= area_hi && area_hi < 1.0, ErrorKind::InvalidParam,
          "erase area range must satisfy 0 < lo <= hi < 1");
  require(aspect_lo > 0.0 && aspect_lo <= aspect_hi, ErrorKind::InvalidParam, "erase aspect range must be positive");
  spec.augmented = true;
  const auto rows = static_cast<double>(spec.n_mels());
  const auto cols = static_cast<double>(spec.n_frames());
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = rng.uniform(area_lo, area_hi) * rows * cols;
    const double aspect = rng.uniform(aspect_lo, aspect_hi);
    const double h = std::round(std::sqrt(area * aspect));
    const double w = std::round(std::sqrt(area / aspect));
    if (h < 1.0 || w < 1.0 || h > rows || w > cols) continue;
    const auto hi = static_cast<std::size_t>(h);
    const auto wi = static_cast<std::size_t>(w);
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.n_mels() - hi)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.n_frames() - wi)));
    for (std::size_t r = top; r < top + hi; ++r)
      std::fill_n(spec.data.row(r).begin() + static_cast<std::ptrdiff_t>(left), wi, 0.0f);
    return spec;
  }
  spec.erase_skipped = true;
  return spec;
}

/// Applies one configured op with its own stream. The probability gate is the caller's job.
inline MelSpectrogram apply_op(const AugmentOp& op, MelSpectrogram spec, RandomStream& rng) {
  const std::size_t tw = detail::width_bound(op.time_width_fraction, spec.n_frames());
  const std::size_t fw = detail::width_bound(op.freq_width_fraction, spec.n_mels());
  switch (op.kind) {
    case AugmentKind::TimeMask: return time_mask(std::move(spec), tw, rng);
    case AugmentKind::FreqMask: return freq_mask(std::move(spec), fw, rng);
    case AugmentKind::SpecAugment: return spec_augment(std::move(spec), op.time_masks, op.freq_masks, tw, fw, rng);
    case AugmentKind::GaussianNoise: {
      const double sigma = rng.uniform(op.sigma_lo, op.sigma_hi);
      return gaussian_noise(std::move(spec), sigma, rng);
    }
    case AugmentKind::RandomErase:
      return random_erase(std::move(spec), {op.area_lo, op.area_hi}, {op.aspect_lo, op.aspect_hi}, rng);
  }
  return spec;
}

/// Produces `copies_per_sample` augmented copies of a raw spectrogram. Each
/// copy draws from a stream keyed by (seed, clip id, sample index, copy), shuffles
/// the op order with it, then gates each op by its probability.
inline std::vector<MelSpectrogram> apply_pipeline(const AugmentPipeline& pipeline, const MelSpectrogram& spec,
                                                  std::uint64_t sample_index) {
  pipeline.validate();
  require(!spec.augmented, ErrorKind::AlreadyAugmented,
          "spectrogram of '" + spec.source_clip_id + "' is already augmented");
  std::vector<MelSpectrogram> out;
  out.reserve(static_cast<std::size_t>(pipeline.copies_per_sample));
  for (int copy = 0; copy < pipeline.copies_per_sample; ++copy) {
    const RandomStream copy_stream =
        make_stream(pipeline.seed, spec.source_clip_id, sample_index, static_cast<std::uint64_t>(copy));
    std::vector<std::size_t> order(pipeline.ops.size());
    std::iota(order.begin(), order.end(), 0);
    RandomStream order_stream = copy_stream.derive("order");
    order_stream.shuffle(order.begin(), order.end());

    MelSpectrogram s = spec;
    for (std::size_t idx : order) {
      const auto& op = pipeline.ops[idx];
      RandomStream op_stream = copy_stream.derive(static_cast<std::uint64_t>(idx));
      if (!op_stream.bernoulli(op.probability)) continue;
      s = apply_op(op, std::move(s), op_stream);
    }
    s.augmented = true;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace vsm
