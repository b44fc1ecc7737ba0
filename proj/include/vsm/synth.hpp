// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic two-class voice corpus for desk-scale experiments.
//
// Stable subjects: a harmonic series at a per-subject fundamental in
// [110, 220] Hz with slow vibrato and a per-subject formant envelope.
// Unstable subjects: the same source with a per-subject upward spectral tilt
// and strong aperiodic noise bursts. Each subject carries its own timbre, so
// identity is learnable but only class evidence generalizes across subjects.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vsm/audio.hpp"
#include "vsm/error.hpp"
#include "vsm/manifest.hpp"
#include "vsm/rng.hpp"
#include "vsm/wav.hpp"

namespace vsm {

struct SynthSpec {
  std::uint64_t seed = 7;
  int n_subjects = 12;
  int clips_per_subject = 10;
  std::uint32_t sample_rate = 48000;
  double duration_s = 2.0;

  void validate() const {
    require(n_subjects >= 6 && n_subjects % 2 == 0, ErrorKind::InvalidParam, "n_subjects must be even and >= 6");
    require(clips_per_subject >= 2, ErrorKind::InvalidParam, "clips_per_subject must be >= 2");
    require(sample_rate >= 8000, ErrorKind::InvalidParam, "sample_rate must be >= 8000");
    require(duration_s > 0.0, ErrorKind::InvalidParam, "duration must be positive");
  }
};

struct SynthSubject {
  std::string id;
  Label label;
  double f0;
  double vibrato_hz;
  double vibrato_depth;
  double formant1, formant2, formant_bw;
  double tilt;  // exponent applied as h^tilt; 0 for Stable
  std::vector<double> harmonic_jitter;
};

inline std::string synth_subject_id(int i) {
  std::ostringstream os;
  os << 'S' << std::setw(2) << std::setfill('0') << i;
  return os.str();
}

inline std::string synth_clip_id(int subject, int clip) {
  std::ostringstream os;
  os << synth_subject_id(subject) << "_c" << std::setw(2) << std::setfill('0') << clip;
  return os.str();
}

inline SynthSubject make_synth_subject(const SynthSpec& spec, int index) {
  RandomStream rng = make_stream(spec.seed, "subject", static_cast<std::uint64_t>(index));
  SynthSubject s;
  s.id = synth_subject_id(index);
  s.label = index % 2 == 0 ? Label::Stable : Label::Unstable;
  s.f0 = rng.uniform(110.0, 220.0);
  s.vibrato_hz = rng.uniform(4.0, 6.0);
  s.vibrato_depth = rng.uniform(0.005, 0.015);
  s.formant1 = rng.uniform(400.0, 900.0);
  s.formant2 = rng.uniform(1000.0, 2500.0);
  s.formant_bw = rng.uniform(150.0, 350.0);
  s.tilt = s.label == Label::Unstable ? rng.uniform(0.4, 0.9) : 0.0;
  s.harmonic_jitter.resize(80);
  for (auto& j : s.harmonic_jitter) j = std::exp(0.4 * rng.normal());
  return s;
}

/// Raw (un-normalized) waveform of one clip.
inline std::vector<double> synth_waveform(const SynthSpec& spec, const SynthSubject& subj, int clip_index) {
  RandomStream rng = make_stream(spec.seed, "clip", subj.id, static_cast<std::uint64_t>(clip_index));
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  const double sr = spec.sample_rate;
  const double f0 = subj.f0 * (1.0 + 0.02 * rng.normal());
  const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double am_hz = rng.uniform(0.5, 1.5);
  const double nyquist_cap = std::min(8000.0, sr / 2.0 - 200.0);

  std::vector<double> amps;
  std::vector<double> phases;
  for (std::size_t h = 1; h <= subj.harmonic_jitter.size(); ++h) {
    const double f = f0 * static_cast<double>(h);
    if (f > nyquist_cap) break;
    auto bump = [&](double centre) {
      const double d = (f - centre) / subj.formant_bw;
      return std::exp(-0.5 * d * d);
    };
    double a = (1.0 / static_cast<double>(h)) * (0.3 + bump(subj.formant1) + 0.6 * bump(subj.formant2));
    a *= subj.harmonic_jitter[h - 1] * std::pow(static_cast<double>(h), subj.tilt);
    amps.push_back(a);
    phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
  }

  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double inst = f0 * (1.0 + subj.vibrato_depth * std::sin(2.0 * std::numbers::pi * subj.vibrato_hz * t + vib_phase));
    phase += 2.0 * std::numbers::pi * inst / sr;
    double v = 0.0;
    for (std::size_t h = 0; h < amps.size(); ++h) v += amps[h] * std::sin(static_cast<double>(h + 1) * phase + phases[h]);
    const double envelope = 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * am_hz * t);
    x[i] = v * envelope;
  }

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(n));

  if (subj.label == Label::Unstable) {
    const int bursts = static_cast<int>(rng.uniform_int(4, 8));
    for (int b = 0; b < bursts; ++b) {
      const auto len = static_cast<std::size_t>(rng.uniform(0.03, 0.12) * sr);
      const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n > len ? n - len : 0)));
      const double gain = rng.uniform(1.0, 2.0) * rms;
      for (std::size_t i = start; i < std::min(n, start + len); ++i) {
        const double w = std::sin(std::numbers::pi * static_cast<double>(i - start) / static_cast<double>(len));
        x[i] += gain * w * rng.normal();
      }
    }
  }
  // Shared low-level noise floor keeps silent regions above the dB floor.
  for (double& v : x) v += 0.003 * rms * rng.normal();
  return x;
}

/// In-memory corpus: peak-normalized clips in subject-major order.
inline std::vector<AudioClip> synth_clips(const SynthSpec& spec) {
  spec.validate();
  std::vector<AudioClip> clips;
  for (int s = 0; s < spec.n_subjects; ++s) {
    const auto subj = make_synth_subject(spec, s);
    for (int c = 0; c < spec.clips_per_subject; ++c) {
      const auto raw = synth_waveform(spec, subj, c);
      clips.push_back(normalize_clip(raw, spec.sample_rate, subj.id, subj.label, synth_clip_id(s, c)));
    }
  }
  return clips;
}

/// Writes `audio/<clip_id>.wav` (16-bit PCM) under `out_dir` plus `manifest.jsonl`.
inline Manifest synth_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  const auto clips = synth_clips(spec);
  std::filesystem::create_directories(out_dir / "audio");
  Manifest m;
  m.base_dir = out_dir;
  for (const auto& clip : clips) {
    const std::string rel = "audio/" + clip.clip_id + ".wav";
    io::write_file_atomic(out_dir / rel, wav::encode_pcm16(clip.samples, clip.sample_rate));
    ManifestEntry e;
    e.clip_id = clip.clip_id;
    e.subject_id = clip.subject_id;
    e.label = clip.label;
    e.audio_path = rel;
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace vsm
