// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration (JSON). Unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/audio.hpp"
#include "vsm/augment.hpp"
#include "vsm/error.hpp"
#include "vsm/io.hpp"
#include "vsm/models.hpp"
#include "vsm/train.hpp"
#include "vsm/transfer.hpp"

namespace vsm::experiment {

/// Reads keys from one JSON object and rejects any key it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorKind::ConfigError, where() + " must be an object");
  }

  template <class T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::ConfigError, where(key) + " has the wrong type");
    }
  }

  template <class T>
  T req(const char* key) {
    require(j_.contains(key), ErrorKind::ConfigError, where(key) + " is required");
    T v{};
    opt(key, v);
    return v;
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = {}) const {
    return (path_.empty() ? std::string("config") : path_) + (key.empty() ? "" : "." + key);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      require(seen_.contains(k), ErrorKind::ConfigError, "unknown key '" + where(k) + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

enum class PhaseSel : std::uint8_t { P1, P2, P3, All };

inline PhaseSel phase_from_string(const std::string& s) {
  if (s == "1" || s == "p1" || s == "P1") return PhaseSel::P1;
  if (s == "2" || s == "p2" || s == "P2") return PhaseSel::P2;
  if (s == "3" || s == "p3" || s == "P3") return PhaseSel::P3;
  if (s == "all") return PhaseSel::All;
  fail(ErrorKind::ConfigError, "unknown phase '" + s + "' (expected 1, 2, 3 or all)");
}

inline std::vector<int> phases_of(PhaseSel p) {
  switch (p) {
    case PhaseSel::P1: return {1};
    case PhaseSel::P2: return {2};
    case PhaseSel::P3: return {3};
    case PhaseSel::All: return {1, 2, 3};
  }
  return {};
}

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "runs/default";
  std::vector<std::string> models = nn::model_names();
  PhaseSel phase = PhaseSel::All;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  SpectrogramParams spectrogram{};
  AugmentPipeline augment = AugmentPipeline::defaults(0);
  nn::TrainConfig phase1 = [] {
    nn::TrainConfig t;
    t.batch_size = 16;
    return t;
  }();
  nn::TrainConfig phase2 = [] {
    nn::TrainConfig t;
    t.batch_size = 32;
    return t;
  }();
  transfer::TransferConfig phase3{};

  void validate() const {
    require(!manifest.empty(), ErrorKind::ConfigError, "config.manifest is required");
    require(!models.empty(), ErrorKind::ConfigError, "config.models must not be empty");
    for (const auto& m : models)
      require(std::ranges::find(nn::model_names(), m) != nn::model_names().end(), ErrorKind::ConfigError,
              "unknown model '" + m + "'");
    require(!seeds.empty(), ErrorKind::ConfigError, "config.seeds must not be empty");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    require(uniq.size() == seeds.size(), ErrorKind::ConfigError, "config.seeds contains duplicates");
    spectrogram.validate();
    augment.validate();
    phase1.validate();
    phase2.validate();
    phase3.validate();
  }
};

namespace detail {

inline void read_train(ObjectReader& r, nn::TrainConfig& t, bool with_alpha) {
  r.opt("max_epochs", t.max_epochs);
  r.opt("early_stop_patience", t.early_stop_patience);
  std::string metric(to_string(t.early_stop_metric));
  r.opt("early_stop_metric", metric);
  t.early_stop_metric = nn::stop_metric_from_string(metric);
  r.opt("batch_size", t.batch_size);
  if (with_alpha) r.opt("alpha", t.adam.alpha);
  r.opt("beta1", t.adam.beta1);
  r.opt("beta2", t.adam.beta2);
  r.opt("epsilon", t.adam.epsilon);
  r.opt("plateau_factor", t.plateau_factor);
  r.opt("plateau_patience", t.plateau_patience);
  r.opt("min_alpha", t.min_alpha);
}

inline void read_spectrogram(ObjectReader& r, SpectrogramParams& p) {
  r.opt("sample_rate", p.sample_rate);
  r.opt("n_fft", p.n_fft);
  r.opt("hop", p.hop);
  r.opt("n_mels", p.n_mels);
  r.opt("f_min", p.f_min);
  r.opt("f_max", p.f_max);
  std::string window = p.window == WindowKind::Hann ? "hann" : "rectangular";
  r.opt("window", window);
  require(window == "hann" || window == "rectangular", ErrorKind::ConfigError, "window must be hann or rectangular");
  p.window = window == "hann" ? WindowKind::Hann : WindowKind::Rectangular;
  r.opt("center_pad", p.center_pad);
  r.opt("db_floor", p.db_floor);
}

inline AugmentOp read_op(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  AugmentOp op;
  op.kind = augment_kind_from_string(r.req<std::string>("kind"));
  r.opt("probability", op.probability);
  r.opt("time_width_fraction", op.time_width_fraction);
  r.opt("freq_width_fraction", op.freq_width_fraction);
  r.opt("time_masks", op.time_masks);
  r.opt("freq_masks", op.freq_masks);
  r.opt("sigma_lo", op.sigma_lo);
  r.opt("sigma_hi", op.sigma_hi);
  r.opt("area_lo", op.area_lo);
  r.opt("area_hi", op.area_hi);
  r.opt("aspect_lo", op.aspect_lo);
  r.opt("aspect_hi", op.aspect_hi);
  r.finish();
  return op;
}

}  // namespace detail

/// Relative paths resolve against `base` (the config file's directory).
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  ExperimentConfig c;
  ObjectReader r(j, "");
  c.manifest = base / r.req<std::string>("manifest");
  std::string out = c.output_dir.string();
  r.opt("output_dir", out);
  c.output_dir = base / out;
  r.opt("models", c.models);
  std::string phase = "all";
  r.opt("phase", phase);
  c.phase = phase_from_string(phase);
  r.opt("seeds", c.seeds);

  if (const auto* s = r.child("spectrogram")) {
    ObjectReader sr(*s, "spectrogram");
    detail::read_spectrogram(sr, c.spectrogram);
    sr.finish();
  }
  if (const auto* a = r.child("augment")) {
    ObjectReader ar(*a, "augment");
    ar.opt("seed", c.augment.seed);
    ar.opt("copies_per_sample", c.augment.copies_per_sample);
    if (const auto* ops = ar.child("ops")) {
      require(ops->is_array(), ErrorKind::ConfigError, "augment.ops must be an array");
      c.augment.ops.clear();
      for (std::size_t i = 0; i < ops->size(); ++i)
        c.augment.ops.push_back(detail::read_op(ops->at(i), "augment.ops[" + std::to_string(i) + "]"));
    }
    ar.finish();
  }
  if (const auto* p = r.child("phase1")) {
    ObjectReader pr(*p, "phase1");
    detail::read_train(pr, c.phase1, true);
    pr.finish();
  }
  if (const auto* p = r.child("phase2")) {
    ObjectReader pr(*p, "phase2");
    detail::read_train(pr, c.phase2, true);
    pr.finish();
  }
  if (const auto* p = r.child("phase3")) {
    ObjectReader pr(*p, "phase3");
    detail::read_train(pr, c.phase3.train, false);
    pr.opt("fine_tune_alpha", c.phase3.fine_tune_alpha);
    pr.opt("freeze_backbone", c.phase3.freeze_backbone);
    pr.opt("cache_features", c.phase3.cache_features);
    if (const auto* h = pr.child("head")) {
      ObjectReader hr(*h, "phase3.head");
      hr.opt("dense_width", c.phase3.head.dense_width);
      hr.opt("dropout", c.phase3.head.dropout);
      hr.opt("l2", c.phase3.head.l2);
      hr.finish();
    }
    pr.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

}  // namespace vsm::experiment
