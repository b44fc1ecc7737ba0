// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vsm/vsm.hpp"

namespace vsm {
namespace {

using experiment::PhaseResult;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsFollowTheProtocol) {
  const auto c = experiment::parse_config(json{{"manifest", "m.jsonl"}}, "/base");
  EXPECT_EQ(c.manifest, std::filesystem::path("/base/m.jsonl"));
  EXPECT_EQ(c.models, nn::model_names());
  EXPECT_EQ(c.phase1.batch_size, 16u);
  EXPECT_EQ(c.phase2.batch_size, 32u);
  EXPECT_EQ(c.phase1.max_epochs, 250);
  EXPECT_EQ(c.phase1.early_stop_patience, 10);
  EXPECT_DOUBLE_EQ(c.phase1.adam.alpha, 1e-4);
  EXPECT_DOUBLE_EQ(c.phase1.adam.epsilon, 1e-7);
  EXPECT_DOUBLE_EQ(c.phase3.fine_tune_alpha, 1e-5);
  EXPECT_EQ(c.phase3.train.early_stop_metric, nn::StopMetric::ValAccuracy);
  EXPECT_EQ(c.phase1.early_stop_metric, nn::StopMetric::ValLoss);
  EXPECT_EQ(c.phase3.head.dense_width, 64u);
  EXPECT_DOUBLE_EQ(c.phase3.head.dropout, 0.5);
  EXPECT_DOUBLE_EQ(c.phase3.head.l2, 1e-4);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.spectrogram.n_mels, 128u);
}

TEST(Config, OverridesAreRead) {
  const json j = {{"manifest", "m.jsonl"},
                  {"models", {"mini-vgg"}},
                  {"phase", "2"},
                  {"seeds", {5}},
                  {"spectrogram", {{"n_mels", 32}, {"hop", 2048}}},
                  {"augment", {{"seed", 9}, {"copies_per_sample", 1}, {"ops", {{{"kind", "GaussianNoise"}}}}}},
                  {"phase1", {{"max_epochs", 7}, {"alpha", 0.001}}},
                  {"phase3", {{"early_stop_metric", "val_loss"}, {"head", {{"dense_width", 16}}}}}};
  const auto c = experiment::parse_config(j);
  EXPECT_EQ(c.models, std::vector<std::string>{"mini-vgg"});
  EXPECT_EQ(c.phase, experiment::PhaseSel::P2);
  EXPECT_EQ(c.spectrogram.n_mels, 32u);
  EXPECT_EQ(c.spectrogram.hop, 2048u);
  EXPECT_EQ(c.augment.copies_per_sample, 1u);
  ASSERT_EQ(c.augment.ops.size(), 1u);
  EXPECT_EQ(c.phase1.max_epochs, 7);
  EXPECT_DOUBLE_EQ(c.phase1.adam.alpha, 0.001);
  EXPECT_EQ(c.phase3.train.early_stop_metric, nn::StopMetric::ValLoss);
  EXPECT_EQ(c.phase3.head.dense_width, 16u);
}

TEST(Config, InvalidInputIsConfigError) {
  const json base = {{"manifest", "m.jsonl"}};
  auto with = [&](const char* k, json v) {
    json j = base;
    j[k] = std::move(v);
    return j;
  };
  EXPECT_ERROR_KIND(experiment::parse_config(json::object()), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("epochs", 3)), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("phase1", {{"max_epoch", 3}})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("phase3", {{"alpha", 0.1}})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("spectrogram", {{"n_mels", "many"}})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("models", {"resnet"})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("phase", "4")), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("seeds", {1, 1})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("augment", {{"ops", {{{"kind", "pitch"}}}}})), ErrorKind::ConfigError);
  EXPECT_ERROR_KIND(experiment::parse_config(with("phase2", {{"max_epochs", 0}})), ErrorKind::InvalidParam);

  test::TempDir dir;
  io::write_text_atomic(dir.path() / "bad.json", "{ not json");
  EXPECT_ERROR_KIND(experiment::load_config(dir.path() / "bad.json"), ErrorKind::ConfigError);
}

// ---------------------------------------------------------------------------
// Run-log audit

json ev(const std::string& name, int phase = 2) {
  return {{"event", name}, {"model", "mini-vgg"}, {"phase", phase}, {"seed", 1}};
}

TEST(Audit, CleanSequencePasses) {
  EXPECT_TRUE(experiment::audit_events({ev("train_start"), ev("train_end"), ev("checkpoint_written"), ev("test_read")})
                  .empty());
}

TEST(Audit, PlantedOrderingFaultsAreReported) {
  EXPECT_FALSE(experiment::audit_events({ev("train_start"), ev("train_end"), ev("test_read"), ev("checkpoint_written")})
                   .empty());
  EXPECT_FALSE(experiment::audit_events({ev("train_start"), ev("test_read"), ev("train_end"), ev("checkpoint_written")})
                   .empty());
  EXPECT_FALSE(experiment::audit_events(
                   {ev("train_start"), ev("train_end"), ev("checkpoint_written"), ev("test_read"), ev("test_read")})
                   .empty());
  EXPECT_FALSE(experiment::audit_events({ev("train_start"), ev("train_end"), ev("checkpoint_written")}).empty());
  auto end = ev("train_end", 3);
  end["backbone_preserved"] = false;
  EXPECT_FALSE(
      experiment::audit_events({ev("train_start", 3), end, ev("checkpoint_written", 3), ev("test_read", 3)}).empty());
}

// ---------------------------------------------------------------------------
// Reports

PhaseResult fake_result(const std::string& model, int phase, std::uint64_t seed, double acc) {
  PhaseResult r;
  r.model = model;
  r.phase = phase;
  r.seed = seed;
  r.checkpoint = experiment::checkpoint_name(model, phase, seed);
  r.test_set_hash = "0123456789abcdef";
  const auto tp = static_cast<std::int64_t>(acc * 10);
  r.test = metrics::evaluate(std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0},
                             [&] {
                               std::vector<int> p(12, 0);
                               for (std::int64_t i = 0; i < tp; ++i) p[i] = 1;
                               return p;
                             }(),
                             {0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.45, 0.4, 0.3, 0.2, 0.35 * acc, 0.1});
  r.history.best_epoch = 3;
  r.history.epochs.push_back({1, 0.7, 0.5, 0.69, 0.5, 1e-4, true, false});
  return r;
}

TEST(Report, JsonRoundTripRendersIdenticalMarkdown) {
  std::vector<PhaseResult> rs;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    rs.push_back(fake_result("mini-vgg", 1, s, 0.1 * static_cast<double>(s + 5)));
    rs.push_back(fake_result("mini-dense", 3, s, 0.9));
  }
  const auto j = experiment::results_to_json(rs);
  const auto back = experiment::results_from_json(json::parse(j.dump()));
  EXPECT_EQ(experiment::render_markdown(back), experiment::render_markdown(rs));
  EXPECT_EQ(experiment::results_to_json(back).dump(), j.dump());
}

TEST(Report, OrderIndependentAndDeterministic) {
  std::vector<PhaseResult> rs = {fake_result("mini-dense", 2, 2, 0.6), fake_result("mini-vgg", 1, 1, 0.8),
                                 fake_result("mini-inception", 3, 1, 0.7)};
  auto rev = rs;
  std::ranges::reverse(rev);
  EXPECT_EQ(experiment::render_markdown(rs), experiment::render_markdown(rev));
  EXPECT_EQ(experiment::results_to_json(rs).dump(), experiment::results_to_json(rev).dump());
  const auto md = experiment::render_markdown(rs);
  EXPECT_NE(md.find("| Model | Phase | Accuracy | Precision | Recall | F1 |"), std::string::npos);
}

TEST(Report, MedianOnlyWithThreeSeeds) {
  std::vector<PhaseResult> two = {fake_result("mini-vgg", 1, 1, 0.6), fake_result("mini-vgg", 1, 2, 0.8)};
  auto sums = experiment::summarize(two);
  ASSERT_EQ(sums.size(), 1u);
  EXPECT_FALSE(sums[0].median);
  EXPECT_NE(experiment::render_markdown(two).find("raw"), std::string::npos);

  auto three = two;
  three.push_back(fake_result("mini-vgg", 1, 3, 1.0));
  sums = experiment::summarize(three);
  EXPECT_TRUE(sums[0].median);
  EXPECT_DOUBLE_EQ(sums[0].accuracy, three[1].test.scores.accuracy);
}

TEST(Report, WriteReportMergesEarlierResults) {
  test::TempDir dir;
  experiment::write_report({fake_result("mini-vgg", 1, 1, 0.6)}, dir.path());
  const auto all = experiment::write_report({fake_result("mini-vgg", 2, 1, 0.7)}, dir.path());
  EXPECT_EQ(all.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "report" / "report.md"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "report" / "roc" / "mini-vgg_p2_s1.csv"));
  const auto again = experiment::results_from_json(json::parse(io::read_text(dir.path() / "report" / "results.json")));
  EXPECT_EQ(again.size(), 2u);
}

// ---------------------------------------------------------------------------
// Runner on a miniature corpus

struct MiniRun {
  test::TempDir dir;
  std::filesystem::path manifest_path;
  MiniRun() {
    SynthSpec spec;
    spec.n_subjects = 6;
    spec.clips_per_subject = 4;
    spec.duration_s = 1.4;
    SpectrogramParams p;
    p.n_mels = 32;
    p.hop = 2048;
    const auto raw = synth_corpus(spec, dir.path() / "corpus");
    const auto m = split_by_subject(extract_spectrograms(raw, p, 1.4, dir.path() / "spec"), SplitSpec{});
    manifest_path = dir.path() / "spec" / "split.jsonl";
    save_manifest(m, manifest_path);
  }
  experiment::ExperimentConfig config(const std::string& out) const {
    json j = {{"manifest", manifest_path.string()},
              {"output_dir", (dir.path() / out).string()},
              {"models", {"mini-vgg"}},
              {"seeds", {1}},
              {"spectrogram", {{"n_mels", 32}, {"hop", 2048}}},
              {"augment", {{"seed", 2}, {"copies_per_sample", 2}}},
              {"phase1", {{"max_epochs", 2}}},
              {"phase2", {{"max_epochs", 2}}},
              {"phase3", {{"max_epochs", 2}}}};
    return experiment::parse_config(j);
  }
};

TEST(Runner, AllPhasesAuditCleanAndDeterministic) {
  MiniRun run;
  experiment::Runner a(run.config("a"));
  const auto ra = a.run();
  ASSERT_EQ(ra.size(), 3u);
  EXPECT_TRUE(a.audit().empty());

  // Augmented training-set size and clean Val/Test.
  const auto aug = load_manifest(run.dir.path() / "a" / "data" / "manifest_augmented.jsonl");
  const auto raw = load_manifest(run.manifest_path);
  EXPECT_EQ(aug.in_split(Split::Train, true).size(), raw.in_split(Split::Train).size() * 3);
  for (const auto& e : aug.entries)
    if (e.split != Split::Train) EXPECT_FALSE(e.augmented) << e.clip_id;

  // Checkpoint write precedes the first test read for every run.
  const auto events = experiment::RunLog::read(run.dir.path() / "a" / "run_log.jsonl");
  for (int phase = 1; phase <= 3; ++phase) {
    long written = -1, read = -1;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!events[i].contains("phase") || events[i]["phase"] != phase) continue;
      if (events[i]["event"] == "checkpoint_written" && written < 0) written = static_cast<long>(i);
      if (events[i]["event"] == "test_read" && read < 0) read = static_cast<long>(i);
    }
    EXPECT_GE(written, 0);
    EXPECT_LT(written, read) << "phase " << phase;
  }
  EXPECT_EQ(ra[2].backbone_hash_before, ra[2].backbone_hash_after);
  EXPECT_EQ(ra[0].test_set_hash, ra[2].test_set_hash);

  experiment::Runner b(run.config("b"));
  const auto rb = b.run();
  for (std::size_t i = 0; i < ra.size(); ++i)
    EXPECT_EQ(metrics::to_json(ra[i].test).dump(), metrics::to_json(rb[i].test).dump()) << "phase " << ra[i].phase;
}

TEST(Runner, PhaseThreeWithoutCheckpointFails) {
  MiniRun run;
  auto cfg = run.config("c");
  cfg.phase = experiment::PhaseSel::P3;
  experiment::Runner r(cfg);
  EXPECT_ERROR_KIND(r.run(), ErrorKind::MissingCheckpoint);
}

TEST(Runner, LeakyManifestIsRefused) {
  MiniRun run;
  auto m = load_manifest(run.manifest_path);
  const std::string train_subject = m.in_split(Split::Train).front()->subject_id;
  for (auto& e : m.entries)
    if (e.split == Split::Test) e.subject_id = train_subject;
  save_manifest(m, run.manifest_path);
  EXPECT_ERROR_KIND(experiment::Runner(run.config("d")), ErrorKind::LeakageRefusal);
}

}  // namespace
}  // namespace vsm
