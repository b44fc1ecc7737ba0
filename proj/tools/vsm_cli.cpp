// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Every verb exits 0 only when its audits pass.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsm/vsm.hpp"

namespace fs = std::filesystem;
using namespace vsm;

namespace {

void progress(const std::string& s) { std::cerr << s << '\n'; }

SpectrogramParams spectrogram_section(const std::string& config_path) {
  SpectrogramParams p;
  if (config_path.empty()) return p;
  const auto j = nlohmann::json::parse(io::read_text(config_path));
  if (j.contains("spectrogram")) {
    experiment::ObjectReader r(j.at("spectrogram"), "spectrogram");
    experiment::detail::read_spectrogram(r, p);
    r.finish();
  }
  p.validate();
  return p;
}

experiment::ExperimentConfig load_with_overrides(const std::string& config, const std::string& out,
                                                 const std::optional<std::uint64_t>& seed, const std::string& phase,
                                                 const std::string& model) {
  auto c = experiment::load_config(config);
  if (!out.empty()) c.output_dir = out;
  if (seed) c.seeds = {*seed};
  if (!phase.empty()) c.phase = experiment::phase_from_string(phase);
  if (!model.empty()) c.models = {model};
  c.validate();
  return c;
}

int finish_run(experiment::Runner& runner, std::vector<experiment::PhaseResult> results) {
  const auto all = experiment::write_report(std::move(results), runner.config().output_dir);
  std::cout << experiment::render_markdown(all);
  const auto failures = runner.audit();
  for (const auto& f : failures) std::cerr << "audit failure: " << f << '\n';
  return failures.empty() ? 0 : 1;
}

int print_leakage(const Manifest& m) {
  const auto rep = check_leakage(m);
  for (const auto& v : rep.violations) std::cout << to_string(v.kind) << ' ' << v.clip_id << ": " << v.detail << '\n';
  std::cout << (rep.ok ? "manifest clean" : "manifest has " + std::to_string(rep.violations.size()) + " violation(s)")
            << '\n';
  return rep.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voice-stability spectrogram CNN toolkit"};
  app.require_subcommand(1);

  std::string config, out, manifest, phase, model, source, checkpoint, split_name = "test";
  std::optional<std::uint64_t> seed;

  auto* synth = app.add_subcommand("synth", "Write a synthetic two-class corpus (WAV + manifest)");
  SynthSpec ss;
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--seed", ss.seed, "Corpus seed");
  synth->add_option("--subjects", ss.n_subjects, "Number of subjects (even, >= 6)");
  synth->add_option("--clips", ss.clips_per_subject, "Clips per subject");
  synth->add_option("--duration", ss.duration_s, "Clip length in seconds");

  auto* spec = app.add_subcommand("spectrogram", "Compute mel spectrograms for every manifest entry");
  double duration = 2.0;
  spec->add_option("--manifest", manifest, "Input manifest")->required();
  spec->add_option("--out", out, "Output directory (manifest.jsonl + spectrograms/)")->required();
  spec->add_option("--config", config, "Config file; only its spectrogram section is used");
  spec->add_option("--duration", duration, "Clip length in seconds (pad or trim)");

  auto* split = app.add_subcommand("split", "Subject-wise Train/Val/Test assignment");
  SplitSpec sp;
  std::vector<double> fractions;
  bool no_stratify = false;
  split->add_option("--manifest", manifest, "Input manifest")->required();
  split->add_option("--out", out, "Output manifest path")->required();
  split->add_option("--seed", sp.seed, "Tie-break seed");
  split->add_option("--fractions", fractions, "Train, val, test fractions")->expected(3)->delimiter(',');
  split->add_flag("--no-stratify", no_stratify, "Do not stratify by label");

  auto* aug = app.add_subcommand("augment", "Append augmented copies of Train spectrograms");
  aug->add_option("--manifest", manifest, "Split manifest")->required();
  aug->add_option("--out", out, "Output manifest path")->required();
  aug->add_option("--config", config, "Experiment config providing the augment section");
  aug->add_option("--seed", seed, "Augmentation seed");

  auto* train = app.add_subcommand("train", "Run phase 1 or 2 training for the configured models and seeds");
  train->add_option("--config", config, "Experiment config")->required();
  train->add_option("--phase", phase, "1 or 2")->required();
  train->add_option("--seed", seed, "Single seed (overrides config)");
  train->add_option("--out", out, "Output directory (overrides config)");
  train->add_option("--model", model, "Single model (overrides config)");

  auto* tr = app.add_subcommand("transfer", "Fine-tune a head on a frozen phase-2 checkpoint");
  tr->add_option("--source", source, "Phase-2 checkpoint")->required();
  tr->add_option("--manifest", manifest, "Split manifest")->required();
  tr->add_option("--config", config, "Experiment config (phase3 section)");
  tr->add_option("--seed", seed, "Head initialization and shuffling seed");
  tr->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split of a manifest");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--manifest", manifest, "Split manifest")->required();
  ev->add_option("--split", split_name, "train, val or test");
  ev->add_option("--out", out, "Write the evaluation JSON here");

  auto* rep = app.add_subcommand("report", "Re-render the report bundle of an output directory");
  rep->add_option("--out", out, "Experiment output directory")->required();

  auto* ver = app.add_subcommand("verify-manifest", "Audit a manifest for leakage");
  ver->add_option("--manifest", manifest, "Manifest")->required();

  auto* run = app.add_subcommand("run", "Run phases end to end and write the report bundle");
  run->add_option("--config", config, "Experiment config")->required();
  run->add_option("--phase", phase, "1, 2, 3 or all");
  run->add_option("--seed", seed, "Single seed (overrides config)");
  run->add_option("--out", out, "Output directory (overrides config)");
  run->add_option("--model", model, "Single model (overrides config)");

  auto* desc = app.add_subcommand("describe", "Print a model summary");
  bool as_json = false;
  desc->add_option("--model", model, "mini-vgg, mini-inception or mini-dense")->required();
  desc->add_flag("--json", as_json, "Machine-readable output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto m = synth_corpus(ss, out);
      std::cout << "wrote " << m.entries.size() << " clips to " << out << '\n';
      return 0;
    }
    if (*spec) {
      const auto params = spectrogram_section(config);
      const auto m = extract_spectrograms(load_manifest(manifest), params, duration, out);
      save_manifest(m, fs::path(out) / "manifest.jsonl");
      std::cout << "wrote " << m.entries.size() << " spectrograms\n";
      return 0;
    }
    if (*split) {
      if (!fractions.empty()) sp.fractions = {fractions[0], fractions[1], fractions[2]};
      sp.stratify_by_label = !no_stratify;
      auto m = load_manifest(manifest);
      auto s = split_by_subject(m, sp);
      const fs::path dst(out);
      // Keep paths valid relative to the new manifest location.
      for (auto& e : s.entries) {
        if (!e.audio_path.empty())
          e.audio_path = fs::relative(fs::absolute(m.resolve(e.audio_path)), fs::absolute(dst).parent_path()).generic_string();
        if (!e.spectrogram_path.empty())
          e.spectrogram_path =
              fs::relative(fs::absolute(m.resolve(e.spectrogram_path)), fs::absolute(dst).parent_path()).generic_string();
      }
      save_manifest(s, dst);
      return print_leakage(s);
    }
    if (*aug) {
      AugmentPipeline pipeline = AugmentPipeline::defaults(0);
      SpectrogramParams params;
      if (!config.empty()) {
        const auto c = experiment::load_config(config);
        pipeline = c.augment;
        params = c.spectrogram;
      }
      if (seed) pipeline.seed = *seed;
      const fs::path dst(out);
      auto m = load_manifest(manifest);
      for (auto& e : m.entries) {
        if (!e.spectrogram_path.empty()) e.spectrogram_path = fs::absolute(m.resolve(e.spectrogram_path)).string();
        if (!e.audio_path.empty()) e.audio_path = fs::absolute(m.resolve(e.audio_path)).string();
      }
      m.base_dir = fs::absolute(dst).parent_path();
      const auto a = augment_manifest(m, pipeline, params);
      save_manifest(a, dst);
      return print_leakage(a);
    }
    if (*train) {
      require(phase == "1" || phase == "2", ErrorKind::ConfigError, "train runs phase 1 or 2; use transfer for phase 3");
      auto c = load_with_overrides(config, out, seed, phase, model);
      experiment::Runner runner(c, progress);
      return finish_run(runner, runner.run());
    }
    if (*tr) {
      transfer::TransferConfig tc;
      if (!config.empty()) tc = experiment::load_config(config).phase3;
      tc.source_checkpoint = source;
      tc.train.seed = seed.value_or(1);
      const auto m = load_manifest(manifest);
      const auto ck = persist::load(source);
      auto frag = transfer::load_frozen_backbone(ck, ck.graph.cut_point());
      auto g = transfer::attach_head(frag, tc.head, 2, tc.train.seed);
      const auto r = transfer::fine_tune(g, m, tc);
      persist::CheckpointMeta meta;
      meta.model = ck.meta.model;
      meta.phase = 3;
      meta.seed = tc.train.seed;
      meta.source_manifest_hash = io::hex64(io::fnv1a(reinterpret_cast<const unsigned char*>(render_manifest(m).data()),
                                                      render_manifest(m).size()));
      persist::save(g, fs::path(out) / "transfer.vsmc", meta);
      auto h = r.history.to_json();
      h["backbone_hash_before"] = r.backbone_hash_before;
      h["backbone_hash_after"] = r.backbone_hash_after;
      io::write_text_atomic(fs::path(out) / "history.json", h.dump(2) + "\n");
      std::cout << "best epoch " << r.history.best_epoch << ", backbone "
                << (r.backbone_hash_before == r.backbone_hash_after ? "preserved" : "CHANGED") << '\n';
      return r.backbone_hash_before == r.backbone_hash_after ? 0 : 1;
    }
    if (*ev) {
      auto ck = persist::load(checkpoint);
      const auto m = load_manifest(manifest);
      require_clean(m);
      const Split s = split_from_string(split_name == "test" ? "Test" : split_name == "val" ? "Val" : split_name == "train" ? "Train" : split_name);
      auto samples = std::make_shared<const std::vector<Sample>>(load_samples(m, s, false));
      const auto e = nn::evaluate_stream(ck.graph, BatchStream(samples, 16, 0, false));
      std::vector<int> pred;
      std::vector<double> score;
      for (std::size_t i = 0; i < samples->size(); ++i) {
        pred.push_back(static_cast<int>(nn::argmax_row(e.probs, i)));
        score.push_back(e.probs.at(i, metrics::kPositive));
      }
      const auto report = metrics::to_json(metrics::evaluate(e.labels, pred, score)).dump(2);
      if (!out.empty()) io::write_text_atomic(out, report + "\n");
      std::cout << report << '\n';
      return 0;
    }
    if (*rep) {
      const auto path = fs::path(out) / "report" / "results.json";
      const auto rs = experiment::results_from_json(nlohmann::json::parse(io::read_text(path)));
      experiment::write_report(rs, out);
      std::cout << experiment::render_markdown(rs);
      return 0;
    }
    if (*ver) return print_leakage(load_manifest(manifest));
    if (*run) {
      auto c = load_with_overrides(config, out, seed, phase, model);
      experiment::Runner runner(c, progress);
      return finish_run(runner, runner.run());
    }
    if (*desc) {
      const auto g = nn::build_model<float>(model, {1, 128, 188}, 2);
      std::cout << (as_json ? nn::describe_json(g).dump(2) + "\n" : nn::describe(g));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
