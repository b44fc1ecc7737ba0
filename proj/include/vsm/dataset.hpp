// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Spectrogram extraction over manifests, train-only augmentation, and seeded
// mini-batch streaming.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "vsm/audio.hpp"
#include "vsm/augment.hpp"
#include "vsm/error.hpp"
#include "vsm/manifest.hpp"
#include "vsm/rng.hpp"
#include "vsm/spectrogram_file.hpp"
#include "vsm/tensor.hpp"
#include "vsm/wav.hpp"

namespace vsm {

/// Loads, normalizes and length-fits one manifest entry's audio.
inline AudioClip load_clip(const Manifest& m, const ManifestEntry& e, double duration_s, std::uint32_t sample_rate) {
  require(!e.audio_path.empty(), ErrorKind::ManifestError, "entry '" + e.clip_id + "' has no audio_path");
  const auto wf = wav::read(m.resolve(e.audio_path));
  require(wf.sample_rate == sample_rate, ErrorKind::ParamMismatch,
          e.clip_id + ": sample rate " + std::to_string(wf.sample_rate) + " != " + std::to_string(sample_rate));
  auto clip = normalize_clip(wf.samples, wf.sample_rate, e.subject_id, e.label, e.clip_id);
  fit_duration(clip, static_cast<std::size_t>(std::llround(duration_s * sample_rate)));
  return clip;
}

/// Computes a spectrogram for every entry with audio and records its path
/// (`spectrograms/<clip_id>.vstn` relative to the manifest directory).
inline Manifest extract_spectrograms(const Manifest& m, const SpectrogramParams& params, double duration_s,
                                     const std::filesystem::path& out_base) {
  const MelExtractor extract(params);
  Manifest out = m;
  out.base_dir = out_base;
  std::filesystem::create_directories(out_base / "spectrograms");
  for (auto& e : out.entries) {
    if (e.audio_path.empty()) continue;
    const auto clip = load_clip(m, e, duration_s, params.sample_rate);
    const auto spec = extract(clip);
    e.spectrogram_path = "spectrograms/" + e.clip_id + ".vstn";
    save_spectrogram(out_base / e.spectrogram_path, spec.data);
    const auto rel = std::filesystem::relative(m.resolve(e.audio_path), out_base);
    e.audio_path = rel.generic_string();
  }
  return out;
}

inline std::string augmented_clip_id(const std::string& source, int copy) {
  return source + "_aug" + std::to_string(copy);
}

/// Loads one stored spectrogram; missing files raise MissingSpectrogram.
inline Array2D<float> load_entry_spectrogram(const Manifest& m, const ManifestEntry& e) {
  const auto path = m.resolve(e.spectrogram_path);
  require(!e.spectrogram_path.empty() && std::filesystem::exists(path), ErrorKind::MissingSpectrogram, e.clip_id);
  return load_spectrogram(path);
}

/// Appends augmented copies for every raw Train entry. Entries in any other
/// split are never touched; an augmented input is refused.
inline Manifest augment_manifest(const Manifest& m, const AugmentPipeline& pipeline, const SpectrogramParams& params) {
  pipeline.validate();
  Manifest out = m;
  std::filesystem::create_directories(m.base_dir / "augmented");
  std::uint64_t sample_index = 0;
  for (const auto& e : m.entries) {
    if (e.split != Split::Train) continue;
    require(!e.augmented, ErrorKind::AlreadyAugmented, "entry '" + e.clip_id + "' is already augmented");
    MelSpectrogram spec;
    spec.data = load_entry_spectrogram(m, e);
    spec.params = params;
    spec.source_clip_id = e.clip_id;
    spec.subject_id = e.subject_id;
    spec.label = e.label;
    const auto copies = apply_pipeline(pipeline, spec, sample_index++);
    for (std::size_t c = 0; c < copies.size(); ++c) {
      ManifestEntry a;
      a.clip_id = augmented_clip_id(e.clip_id, static_cast<int>(c));
      a.subject_id = copies[c].subject_id;
      a.label = copies[c].label;
      a.spectrogram_path = "augmented/" + a.clip_id + ".vstn";
      a.split = Split::Train;
      a.augmented = true;
      a.source_clip_id = e.clip_id;
      save_spectrogram(m.base_dir / a.spectrogram_path, copies[c].data);
      out.entries.push_back(std::move(a));
    }
  }
  return out;
}

/// A labeled input held in memory; spectrograms are stored as [1 x n_mels x n_frames].
struct Sample {
  std::string clip_id;
  Label label = Label::Stable;
  Tensor<float> data;
};

inline Tensor<float> spectrogram_tensor(const Array2D<float>& a) {
  return Tensor<float>({1, a.rows(), a.cols()}, std::vector<float>(a.data().begin(), a.data().end()));
}

inline std::vector<Sample> load_samples(const Manifest& m, Split split, bool include_augmented) {
  std::vector<Sample> out;
  for (const auto* e : m.in_split(split, include_augmented))
    out.push_back({e->clip_id, e->label, spectrogram_tensor(load_entry_spectrogram(m, *e))});
  return out;
}

struct Batch {
  Tensor<float> inputs;        // [B x sample shape]
  std::vector<int> labels;     // class index per row
  std::vector<std::string> clip_ids;
};

/// Seeded epoch iterator over an in-memory split. Each epoch is a fresh
/// shuffle keyed by (seed, epoch); every sample appears exactly once. A final
/// short batch is kept, except that a lone leftover sample joins the previous
/// batch (batch-norm training needs at least two rows).
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const std::vector<Sample>> samples, std::size_t batch_size, std::uint64_t seed,
              bool shuffle = true)
      : samples_(std::move(samples)), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
    require(batch_size_ >= 1, ErrorKind::InvalidParam, "batch size must be positive");
  }

  std::size_t size() const noexcept { return samples_->size(); }
  std::size_t batch_size() const noexcept { return batch_size_; }
  const std::vector<Sample>& samples() const noexcept { return *samples_; }

  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(samples_->size());
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_) {
      RandomStream rng = make_stream(seed_, "epoch", epoch);
      rng.shuffle(order.begin(), order.end());
    }
    return order;
  }

  std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const {
    const auto order = epoch_order(epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size_)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
    if (batches.size() >= 2 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }
    return batches;
  }

  Batch make_batch(const std::vector<std::size_t>& idx) const {
    require(!idx.empty(), ErrorKind::InvalidParam, "empty batch");
    const Shape& shape = (*samples_)[idx.front()].data.shape();
    const std::size_t n = shape_size(shape);
    Shape bs{idx.size()};
    bs.insert(bs.end(), shape.begin(), shape.end());
    Batch b;
    b.inputs = Tensor<float>(bs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& s = (*samples_)[idx[i]];
      require(s.data.shape() == shape, ErrorKind::ShapeError, "sample " + s.clip_id + " has a different shape");
      std::ranges::copy(s.data.data(), b.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * n));
      b.labels.push_back(static_cast<int>(s.label));
      b.clip_ids.push_back(s.clip_id);
    }
    return b;
  }

 private:
  std::shared_ptr<const std::vector<Sample>> samples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

inline BatchStream load_batchstream(const Manifest& m, Split split, std::size_t batch_size, std::uint64_t seed,
                                    bool include_augmented = true) {
  require(split != Split::Unassigned, ErrorKind::InvalidParam, "cannot stream unassigned entries");
  auto samples = std::make_shared<const std::vector<Sample>>(load_samples(m, split, include_augmented));
  return BatchStream(std::move(samples), batch_size, seed);
}

}  // namespace vsm
