// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Three-phase protocol: (1) train from scratch on raw clips, (2) train on
// raw + augmented Train clips and export a checkpoint, (3) freeze the phase-2
// backbone at its cut point and fine-tune a new head on raw clips. Every run
// evaluates on the same raw Test split exactly once, after training.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "vsm/config.hpp"
#include "vsm/dataset.hpp"
#include "vsm/error.hpp"
#include "vsm/io.hpp"
#include "vsm/manifest.hpp"
#include "vsm/metrics.hpp"
#include "vsm/models.hpp"
#include "vsm/persist.hpp"
#include "vsm/train.hpp"
#include "vsm/transfer.hpp"

namespace vsm::experiment {

/// Append-only JSON Lines event log. Each event gets a sequence number and a
/// UTC timestamp with microsecond resolution.
class RunLog {
 public:
  explicit RunLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    for (const auto& e : read(path_)) seq_ = std::max(seq_, e.value("seq", std::uint64_t{0}) + 1);
  }

  std::uint64_t next_seq() const noexcept { return seq_; }

  void event(const std::string& name, nlohmann::ordered_json fields = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json j;
    j["seq"] = seq_++;
    j["timestamp"] = timestamp();
    j["event"] = name;
    for (auto& [k, v] : fields.items()) j[k] = v;
    std::ofstream out(path_, std::ios::app);
    require(static_cast<bool>(out), ErrorKind::IoError, "cannot append to " + path_.string());
    out << j.dump() << '\n';
    out.flush();
  }

  const std::filesystem::path& path() const noexcept { return path_; }

  static std::vector<nlohmann::json> read(const std::filesystem::path& p) {
    std::vector<nlohmann::json> out;
    if (!std::filesystem::exists(p)) return out;
    std::istringstream in(io::read_text(p));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    return out;
  }

 private:
  static std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count() % 1000000;
    std::ostringstream os;
    os << persist::utc_now().substr(0, 19) << '.' << std::setw(6) << std::setfill('0') << us << 'Z';
    return os.str();
  }

  std::filesystem::path path_;
  std::uint64_t seq_ = 0;
};

/// Checks the ordering contracts recorded in a run log: for every
/// (model, phase, seed) the Test split is read exactly once, after training
/// ended and after the checkpoint was written; phase-3 runs preserved the
/// backbone. Returns human-readable failures (empty when clean).
inline std::vector<std::string> audit_events(const std::vector<nlohmann::json>& events) {
  std::map<std::string, std::vector<std::string>> seen;
  std::vector<std::string> failures;
  for (const auto& e : events) {
    if (!e.contains("model")) continue;
    const std::string key = e.at("model").get<std::string>() + " phase " + std::to_string(e.at("phase").get<int>()) +
                            " seed " + std::to_string(e.at("seed").get<std::uint64_t>());
    const std::string ev = e.at("event").get<std::string>();
    auto& hist = seen[key];
    if (ev == "test_read") {
      if (std::ranges::count(hist, "test_read") > 0) failures.push_back(key + ": test split read more than once");
      if (std::ranges::count(hist, "train_end") == 0) failures.push_back(key + ": test split read before training ended");
      if (std::ranges::count(hist, "checkpoint_written") == 0)
        failures.push_back(key + ": test split read before the checkpoint was written");
    }
    if (ev == "train_start" && std::ranges::count(hist, "test_read") > 0)
      failures.push_back(key + ": training started after the test split was read");
    if (ev == "train_end" && e.contains("backbone_preserved") && !e.at("backbone_preserved").get<bool>())
      failures.push_back(key + ": frozen backbone changed during fine-tuning");
    hist.push_back(ev);
  }
  for (const auto& [key, hist] : seen)
    if (std::ranges::count(hist, "train_end") > 0 && std::ranges::count(hist, "test_read") != 1)
      failures.push_back(key + ": test split not evaluated");
  return failures;
}

struct PhaseResult {
  std::string model;
  int phase = 1;
  std::uint64_t seed = 0;
  metrics::EvalReport test;
  nn::History history;
  std::string checkpoint;     // relative to the output directory
  std::string test_set_hash;  // hash of the ordered Test clip ids
  std::string backbone_hash_before;
  std::string backbone_hash_after;
};

inline nlohmann::ordered_json to_json(const PhaseResult& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["phase"] = r.phase;
  j["seed"] = r.seed;
  j["checkpoint"] = r.checkpoint;
  j["test_set_hash"] = r.test_set_hash;
  if (r.phase == 3) {
    j["backbone_hash_before"] = r.backbone_hash_before;
    j["backbone_hash_after"] = r.backbone_hash_after;
  }
  j["test"] = metrics::to_json(r.test);
  j["history"] = r.history.to_json();
  return j;
}

inline nn::History history_from_json(const nlohmann::json& j) {
  nn::History h;
  h.best_epoch = j.at("best_epoch").get<int>();
  h.stopped_epoch = j.at("stopped_epoch").get<int>();
  h.lr_reduction_epochs = j.at("lr_reduction_epochs").get<std::vector<int>>();
  for (const auto& e : j.at("epochs"))
    h.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("train_accuracy").get<double>(),
                        e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>(), e.at("alpha").get<double>(),
                        e.at("checkpoint").get<bool>(), e.at("lr_reduced").get<bool>()});
  return h;
}

inline PhaseResult phase_result_from_json(const nlohmann::json& j) {
  PhaseResult r;
  r.model = j.at("model").get<std::string>();
  r.phase = j.at("phase").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.test_set_hash = j.at("test_set_hash").get<std::string>();
  r.backbone_hash_before = j.value("backbone_hash_before", "");
  r.backbone_hash_after = j.value("backbone_hash_after", "");
  r.test = metrics::from_json(j.at("test"));
  r.history = history_from_json(j.at("history"));
  return r;
}

inline std::string checkpoint_name(const std::string& model, int phase, std::uint64_t seed) {
  return "checkpoints/" + model + "_p" + std::to_string(phase) + "_s" + std::to_string(seed) + ".vsmc";
}

using Progress = std::function<void(const std::string&)>;

/// Runs phases for every (model, seed) in a config against one split manifest.
/// The split is fixed by the manifest, so all seeds and phases share it.
class Runner {
 public:
  explicit Runner(ExperimentConfig cfg, Progress progress = {})
      : cfg_(std::move(cfg)), progress_(std::move(progress)), log_(cfg_.output_dir / "run_log.jsonl") {
    cfg_.validate();
    raw_ = load_manifest(cfg_.manifest);
    require_clean(raw_);
    std::filesystem::create_directories(cfg_.output_dir / "checkpoints");
    manifest_hash_ = io::hex64(io::fnv1a(reinterpret_cast<const unsigned char*>(render_manifest(raw_).data()),
                                         render_manifest(raw_).size()));
    train_raw_ = std::make_shared<const std::vector<Sample>>(load_samples(raw_, Split::Train, false));
    val_raw_ = std::make_shared<const std::vector<Sample>>(load_samples(raw_, Split::Val, false));
    require(!train_raw_->empty() && !val_raw_->empty() && !raw_.in_split(Split::Test, false).empty(),
            ErrorKind::ManifestError, "manifest needs raw Train, Val and Test entries");
    input_shape_ = train_raw_->front().data.shape();
    first_seq_ = log_.next_seq();
    log_.event("run_start", {{"manifest_hash", manifest_hash_}});
  }

  /// Audits the events this runner appended to the run log.
  std::vector<std::string> audit() const {
    std::vector<nlohmann::json> mine;
    for (auto& e : RunLog::read(log_.path()))
      if (e.at("seq").get<std::uint64_t>() >= first_seq_) mine.push_back(std::move(e));
    return audit_events(mine);
  }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const RunLog& log() const noexcept { return log_; }

  std::vector<PhaseResult> run() {
    std::vector<PhaseResult> out;
    for (int phase : phases_of(cfg_.phase))
      for (const auto& model : cfg_.models)
        for (auto seed : cfg_.seeds) out.push_back(run_phase(model, phase, seed));
    return out;
  }

  PhaseResult run_phase(const std::string& model, int phase, std::uint64_t seed) {
    switch (phase) {
      case 1: return run_phase1(model, seed);
      case 2: return run_phase2(model, seed);
      case 3: return run_phase3(model, seed);
      default: fail(ErrorKind::ConfigError, "phase must be 1, 2 or 3");
    }
  }

  PhaseResult run_phase1(const std::string& model, std::uint64_t seed) {
    say(model + " phase 1 seed " + std::to_string(seed));
    auto g = nn::build_model<float>(model, input_shape_, 2);
    g.init(seed);
    auto tc = cfg_.phase1;
    tc.seed = seed;
    log_.event("train_start", ids(model, 1, seed));
    PhaseResult r = base(model, 1, seed);
    r.history = nn::train_loop(g, BatchStream(train_raw_, tc.batch_size, seed),
                               BatchStream(val_raw_, tc.batch_size, seed, false), tc, epoch_printer());
    log_.event("train_end", with(ids(model, 1, seed), "best_epoch", r.history.best_epoch));
    export_checkpoint(g, r);
    r.test = test_once(g, r);
    return r;
  }

  PhaseResult run_phase2(const std::string& model, std::uint64_t seed) {
    say(model + " phase 2 seed " + std::to_string(seed));
    const auto& train_aug = augmented_train();
    auto g = nn::build_model<float>(model, input_shape_, 2);
    g.init(seed);
    auto tc = cfg_.phase2;
    tc.seed = seed;
    log_.event("train_start", with(ids(model, 2, seed), "train_size", train_aug->size()));
    PhaseResult r = base(model, 2, seed);
    r.history = nn::train_loop(g, BatchStream(train_aug, tc.batch_size, seed),
                               BatchStream(val_raw_, tc.batch_size, seed, false), tc, epoch_printer());
    log_.event("train_end", with(ids(model, 2, seed), "best_epoch", r.history.best_epoch));
    export_checkpoint(g, r);
    r.test = test_once(g, r);
    return r;
  }

  PhaseResult run_phase3(const std::string& model, std::uint64_t seed) {
    say(model + " phase 3 seed " + std::to_string(seed));
    const auto source = cfg_.output_dir / checkpoint_name(model, 2, seed);
    require(std::filesystem::exists(source), ErrorKind::MissingCheckpoint,
            "phase 3 needs the phase-2 checkpoint " + source.string());
    const auto ck = persist::load(source);
    log_.event("checkpoint_read", with(ids(model, 3, seed), "path", checkpoint_name(model, 2, seed)));
    auto frag = transfer::load_frozen_backbone(ck, ck.graph.cut_point());
    auto g = transfer::attach_head(frag, cfg_.phase3.head, 2, seed);
    auto tc = cfg_.phase3;
    tc.train.seed = seed;
    tc.source_checkpoint = source.string();
    log_.event("train_start", ids(model, 3, seed));
    PhaseResult r = base(model, 3, seed);
    auto ft = transfer::fine_tune(g, raw_, tc);
    r.history = std::move(ft.history);
    r.backbone_hash_before = ft.backbone_hash_before;
    r.backbone_hash_after = ft.backbone_hash_after;
    log_.event("train_end", with(with(ids(model, 3, seed), "best_epoch", r.history.best_epoch), "backbone_preserved",
                                 ft.backbone_hash_before == ft.backbone_hash_after));
    export_checkpoint(g, r);
    r.test = test_once(g, r);
    return r;
  }

  /// Raw Train plus augmented copies. Existing augmented entries in the
  /// manifest are used as-is; otherwise they are generated under the output
  /// directory.
  const std::shared_ptr<const std::vector<Sample>>& augmented_train() {
    if (train_aug_) return train_aug_;
    Manifest aug = raw_;
    if (std::ranges::none_of(raw_.entries, [](const ManifestEntry& e) { return e.augmented; })) {
      Manifest rebased = raw_;
      for (auto& e : rebased.entries)
        if (!e.spectrogram_path.empty())
          e.spectrogram_path = std::filesystem::absolute(raw_.resolve(e.spectrogram_path)).string();
      rebased.base_dir = cfg_.output_dir / "data";
      aug = augment_manifest(rebased, cfg_.augment, cfg_.spectrogram);
      save_manifest(aug, rebased.base_dir / "manifest_augmented.jsonl");
    }
    require_clean(aug);
    train_aug_ = std::make_shared<const std::vector<Sample>>(load_samples(aug, Split::Train, true));
    log_.event("augmented", {{"train_size", train_aug_->size()}, {"raw_train_size", train_raw_->size()}});
    return train_aug_;
  }

 private:
  static nlohmann::ordered_json ids(const std::string& model, int phase, std::uint64_t seed) {
    return {{"model", model}, {"phase", phase}, {"seed", seed}};
  }
  template <class V>
  static nlohmann::ordered_json with(nlohmann::ordered_json j, const char* k, const V& v) {
    j[k] = v;
    return j;
  }

  PhaseResult base(const std::string& model, int phase, std::uint64_t seed) const {
    PhaseResult r;
    r.model = model;
    r.phase = phase;
    r.seed = seed;
    r.checkpoint = checkpoint_name(model, phase, seed);
    return r;
  }

  void export_checkpoint(const nn::Graph<float>& g, const PhaseResult& r) {
    persist::CheckpointMeta meta;
    meta.model = r.model;
    meta.phase = r.phase;
    meta.seed = r.seed;
    meta.source_manifest_hash = manifest_hash_;
    persist::save(g, cfg_.output_dir / r.checkpoint, meta);
    log_.event("checkpoint_written", with(ids(r.model, r.phase, r.seed), "path", r.checkpoint));
  }

  /// The only place the Test split is read.
  metrics::EvalReport test_once(nn::Graph<float>& g, PhaseResult& r) {
    auto test = std::make_shared<const std::vector<Sample>>(load_samples(raw_, Split::Test, false));
    std::string ids_joined;
    for (const auto& s : *test) ids_joined += s.clip_id + "\n";
    r.test_set_hash = io::hex64(io::fnv1a(reinterpret_cast<const unsigned char*>(ids_joined.data()), ids_joined.size()));
    log_.event("test_read", with(with(ids(r.model, r.phase, r.seed), "n", test->size()), "test_set_hash", r.test_set_hash));
    const auto ev = nn::evaluate_stream(g, BatchStream(test, 16, 0, false));
    std::vector<int> pred;
    std::vector<double> score;
    for (std::size_t i = 0; i < test->size(); ++i) {
      pred.push_back(static_cast<int>(nn::argmax_row(ev.probs, i)));
      score.push_back(static_cast<double>(ev.probs.at(i, metrics::kPositive)));
    }
    auto rep = metrics::evaluate(ev.labels, pred, score);
    say("  test accuracy " + std::to_string(rep.scores.accuracy) + " auc " + std::to_string(rep.auc));
    return rep;
  }

  nn::EpochObserver epoch_printer() {
    if (!progress_) return {};
    return [this](const nn::EpochMetrics& e) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << "  epoch " << e.epoch << " loss " << e.train_loss << " acc "
         << e.train_accuracy << " val_loss " << e.val_loss << " val_acc " << e.val_accuracy
         << (e.checkpoint ? " *" : "") << (e.lr_reduced ? " lr-" : "");
      progress_(os.str());
    };
  }

  void say(const std::string& s) const {
    if (progress_) progress_(s);
  }

  ExperimentConfig cfg_;
  Progress progress_;
  RunLog log_;
  Manifest raw_;
  std::string manifest_hash_;
  std::uint64_t first_seq_ = 0;
  Shape input_shape_;
  std::shared_ptr<const std::vector<Sample>> train_raw_, val_raw_, train_aug_;
};

inline std::vector<PhaseResult> run_phase1(const ExperimentConfig& c, Progress p = {}) {
  auto cfg = c;
  cfg.phase = PhaseSel::P1;
  return Runner(cfg, std::move(p)).run();
}
inline std::vector<PhaseResult> run_phase2(const ExperimentConfig& c, Progress p = {}) {
  auto cfg = c;
  cfg.phase = PhaseSel::P2;
  return Runner(cfg, std::move(p)).run();
}
inline std::vector<PhaseResult> run_phase3(const ExperimentConfig& c, Progress p = {}) {
  auto cfg = c;
  cfg.phase = PhaseSel::P3;
  return Runner(cfg, std::move(p)).run();
}

// ---------------------------------------------------------------------------
// Report bundle

struct Summary {
  std::string model;
  int phase = 1;
  std::size_t n_seeds = 0;
  bool median = false;  // false: fewer than 3 seeds, values are per-seed raw
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
};

inline double median(std::vector<double> v) {
  std::ranges::sort(v);
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline int model_rank(const std::string& m) {
  const auto& names = nn::model_names();
  return static_cast<int>(std::ranges::find(names, m) - names.begin());
}

inline void sort_results(std::vector<PhaseResult>& rs) {
  std::ranges::sort(rs, [](const PhaseResult& a, const PhaseResult& b) {
    return std::tuple(model_rank(a.model), a.model, a.phase, a.seed) <
           std::tuple(model_rank(b.model), b.model, b.phase, b.seed);
  });
}

/// One row per (model, phase); medians over seeds when at least 3 are present.
inline std::vector<Summary> summarize(std::vector<PhaseResult> rs) {
  sort_results(rs);
  std::vector<Summary> out;
  for (std::size_t i = 0; i < rs.size();) {
    std::size_t j = i;
    while (j < rs.size() && rs[j].model == rs[i].model && rs[j].phase == rs[i].phase) ++j;
    Summary s;
    s.model = rs[i].model;
    s.phase = rs[i].phase;
    s.n_seeds = j - i;
    s.median = s.n_seeds >= 3;
    if (s.median) {
      auto col = [&](auto f) {
        std::vector<double> v;
        for (std::size_t k = i; k < j; ++k) v.push_back(f(rs[k]));
        return median(v);
      };
      s.accuracy = col([](const PhaseResult& r) { return r.test.scores.accuracy; });
      s.precision = col([](const PhaseResult& r) { return r.test.scores.precision; });
      s.recall = col([](const PhaseResult& r) { return r.test.scores.recall; });
      s.f1 = col([](const PhaseResult& r) { return r.test.scores.f1; });
      s.auc = col([](const PhaseResult& r) { return r.test.auc; });
    }
    out.push_back(s);
    i = j;
  }
  return out;
}

inline nlohmann::ordered_json results_to_json(std::vector<PhaseResult> rs) {
  sort_results(rs);
  nlohmann::ordered_json j;
  j["positive_class"] = "unstable";
  auto& arr = j["results"] = nlohmann::ordered_json::array();
  for (const auto& r : rs) arr.push_back(to_json(r));
  auto& sm = j["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : summarize(rs)) {
    nlohmann::ordered_json e = {{"model", s.model}, {"phase", s.phase}, {"n_seeds", s.n_seeds}, {"median", s.median}};
    if (s.median) {
      e["accuracy"] = s.accuracy;
      e["precision"] = s.precision;
      e["recall"] = s.recall;
      e["f1"] = s.f1;
      e["auc"] = s.auc;
    }
    sm.push_back(e);
  }
  return j;
}

inline std::vector<PhaseResult> results_from_json(const nlohmann::json& j) {
  std::vector<PhaseResult> rs;
  for (const auto& r : j.at("results")) rs.push_back(phase_result_from_json(r));
  return rs;
}

inline std::string fmt2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

inline std::string phase_title(int p) {
  switch (p) {
    case 1: return "Phase 1: baseline on non-augmented data";
    case 2: return "Phase 2: training on augmented data";
    case 3: return "Phase 3: transfer fine-tuning on non-augmented data";
  }
  return "Phase " + std::to_string(p);
}

/// Markdown tables; metrics rounded to two decimals.
inline std::string render_markdown(std::vector<PhaseResult> rs) {
  sort_results(rs);
  std::ostringstream md;
  md << "# Experiment report\n\nPositive class: unstable. All metrics are on the held-out test split.\n";
  for (int p = 1; p <= 3; ++p) {
    if (std::ranges::none_of(rs, [p](const PhaseResult& r) { return r.phase == p; })) continue;
    md << "\n## " << phase_title(p) << "\n\n| Model | Seed | Accuracy | Precision | Recall | F1 | AUC |\n"
       << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rs)
      if (r.phase == p)
        md << "| " << r.model << " | " << r.seed << " | " << fmt2(r.test.scores.accuracy) << " | "
           << fmt2(r.test.scores.precision) << (r.test.scores.precision_undefined ? "*" : "") << " | "
           << fmt2(r.test.scores.recall) << (r.test.scores.recall_undefined ? "*" : "") << " | "
           << fmt2(r.test.scores.f1) << " | " << fmt2(r.test.auc) << " |\n";
  }

  const auto sums = summarize(rs);
  md << "\n## AUC by model\n\n| Model | Phase 1 | Phase 2 | Phase 3 |\n|---|---|---|---|\n";
  std::vector<std::string> models;
  for (const auto& r : rs)
    if (std::ranges::find(models, r.model) == models.end()) models.push_back(r.model);
  for (const auto& m : models) {
    md << "| " << m;
    for (int p = 1; p <= 3; ++p) {
      std::string cell = "-";
      for (const auto& s : sums)
        if (s.model == m && s.phase == p) {
          if (s.median) {
            cell = fmt2(s.auc);
          } else {
            cell.clear();
            for (const auto& r : rs)
              if (r.model == m && r.phase == p) cell += (cell.empty() ? "" : " / ") + fmt2(r.test.auc);
            cell += " (raw)";
          }
        }
      md << " | " << cell;
    }
    md << " |\n";
  }

  md << "\n## Comparison across phases\n\n| Model | Phase | Accuracy | Precision | Recall | F1 |\n"
     << "|---|---|---|---|---|---|\n";
  bool any_raw = false;
  for (const auto& s : sums) {
    if (s.median) {
      md << "| " << s.model << " | " << s.phase << " | " << fmt2(s.accuracy) << " | " << fmt2(s.precision) << " | "
         << fmt2(s.recall) << " | " << fmt2(s.f1) << " |\n";
      continue;
    }
    any_raw = true;
    for (const auto& r : rs)
      if (r.model == s.model && r.phase == s.phase)
        md << "| " << s.model << " | " << s.phase << " (seed " << r.seed << ", raw) | " << fmt2(r.test.scores.accuracy)
           << " | " << fmt2(r.test.scores.precision) << " | " << fmt2(r.test.scores.recall) << " | "
           << fmt2(r.test.scores.f1) << " |\n";
  }
  md << "\nRows are medians over seeds";
  if (any_raw) md << "; rows marked raw have fewer than 3 seeds and are not aggregated";
  md << ". An asterisk marks a zero-denominator metric reported as 0.\n";
  return md.str();
}

inline std::string roc_csv(const metrics::EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "fpr,tpr,threshold\n";
  for (const auto& p : r.roc) os << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
  return os.str();
}

/// Writes `report/results.json`, `report/report.md` and `report/roc/*.csv`.
/// Results already present in results.json for other (model, phase, seed)
/// keys are kept, so phases may be run by separate invocations.
inline std::vector<PhaseResult> write_report(std::vector<PhaseResult> rs, const std::filesystem::path& output_dir) {
  const auto dir = output_dir / "report";
  const auto json_path = dir / "results.json";
  if (std::filesystem::exists(json_path)) {
    for (auto& old : results_from_json(nlohmann::json::parse(io::read_text(json_path))))
      if (std::ranges::none_of(rs, [&](const PhaseResult& r) {
            return r.model == old.model && r.phase == old.phase && r.seed == old.seed;
          }))
        rs.push_back(std::move(old));
  }
  sort_results(rs);
  io::write_text_atomic(json_path, results_to_json(rs).dump(2) + "\n");
  io::write_text_atomic(dir / "report.md", render_markdown(rs));
  for (const auto& r : rs)
    io::write_text_atomic(dir / "roc" / (r.model + "_p" + std::to_string(r.phase) + "_s" + std::to_string(r.seed) + ".csv"),
                          roc_csv(r.test));
  return rs;
}

}  // namespace vsm::experiment
