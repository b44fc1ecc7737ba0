// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Backbone truncation, freezing, head attachment and fine-tuning.

#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "vsm/dataset.hpp"
#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/io.hpp"
#include "vsm/manifest.hpp"
#include "vsm/persist.hpp"
#include "vsm/train.hpp"

namespace vsm::transfer {

using nn::Graph;

struct HeadConfig {
  std::size_t dense_width = 64;
  double dropout = 0.5;
  double l2 = 1e-4;
};

struct TransferConfig {
  HeadConfig head{};
  double fine_tune_alpha = 1e-5;
  bool freeze_backbone = true;
  std::string source_checkpoint;
  nn::TrainConfig train = [] {
    nn::TrainConfig t;
    t.early_stop_metric = nn::StopMetric::ValAccuracy;
    t.batch_size = 16;
    return t;
  }();
  /// Train the head on precomputed backbone features. Exact because the
  /// frozen backbone is deterministic in inference mode.
  bool cache_features = true;

  void validate() const {
    require(fine_tune_alpha > 0.0, ErrorKind::InvalidParam, "fine_tune_alpha must be positive");
    require(head.dropout >= 0.0 && head.dropout < 1.0, ErrorKind::InvalidParam, "head dropout must lie in [0, 1)");
    require(head.dense_width >= 1 && head.l2 >= 0.0, ErrorKind::InvalidParam, "invalid head config");
    train.validate();
  }
};

inline const std::vector<std::string>& head_layer_names() {
  static const std::vector<std::string> names = {"head_gap",   "head_bn",   "head_dropout", "head_dense",
                                                 "head_relu", "head_out", "head_softmax"};
  return names;
}

/// The cut layer and all its ancestors, in the source order, every layer frozen.
inline Graph<float> extract_fragment(const Graph<float>& src, const std::string& cut_point) {
  require(src.contains(cut_point), ErrorKind::CutPointError, "cut point '" + cut_point + "' not in graph");
  std::set<std::string> keep = {cut_point};
  for (std::size_t i = src.index_of(cut_point) + 1; i-- > 0;) {
    const auto& l = src.layer(i);
    if (!keep.contains(l.name())) continue;
    for (const auto& in : l.inputs())
      if (in != nn::kGraphInput) keep.insert(in);
  }
  Graph<float> frag(src.input_shape());
  for (std::size_t i = 0; i <= src.index_of(cut_point); ++i) {
    const auto& l = src.layer(i);
    if (!keep.contains(l.name())) continue;
    auto c = l.clone();
    c->set_trainable(false);
    frag.add(std::move(c));
  }
  frag.set_family(src.family());
  frag.set_cut_point(cut_point);
  frag.validate();
  return frag;
}

/// Fragment from a loaded checkpoint. When the checkpoint carries a probe for
/// this cut point, the fragment must reproduce it bit-exactly.
inline Graph<float> load_frozen_backbone(const persist::Checkpoint& ck, const std::string& cut_point) {
  auto frag = extract_fragment(ck.graph, cut_point);
  if (ck.meta.probe && ck.meta.probe->cut_point == cut_point) {
    const auto p = persist::make_probe(frag, cut_point);
    require(p.activation_hash == ck.meta.probe->activation_hash, ErrorKind::CorruptCheckpoint,
            "fragment does not reproduce the recorded cut-point activation");
  }
  return frag;
}

inline Graph<float> load_frozen_backbone(const std::filesystem::path& path, const std::string& cut_point = {}) {
  const auto ck = persist::load(path);
  return load_frozen_backbone(ck, cut_point.empty() ? ck.graph.cut_point() : cut_point);
}

namespace detail {

inline void append_head(Graph<float>& g, const std::string& from, std::size_t channels, const HeadConfig& h,
                        std::size_t num_classes) {
  const auto& n = head_layer_names();
  g.emplace<nn::GlobalAvgPool>(n[0], {from});
  g.emplace<nn::BatchNorm>(n[1], {n[0]}, nn::BatchNorm<float>::Config{channels, 0.9, 1e-5});
  g.emplace<nn::Dropout>(n[2], {n[1]}, h.dropout);
  g.emplace<nn::Dense>(n[3], {n[2]}, nn::Dense<float>::Config{channels, h.dense_width, h.l2});
  g.emplace<nn::ReLU>(n[4], {n[3]});
  g.emplace<nn::Dense>(n[5], {n[4]}, nn::Dense<float>::Config{h.dense_width, num_classes, 0.0});
  g.emplace<nn::Softmax>(n[6], {n[5]});
}

}  // namespace detail

/// Appends GAP -> BN -> Dropout -> Dense(ReLU, L2) -> Dense -> Softmax after the
/// fragment's output. New layers are trainable and initialized from `seed`.
inline Graph<float> attach_head(const Graph<float>& fragment, const HeadConfig& head, std::size_t num_classes,
                                std::uint64_t seed) {
  const auto shapes = fragment.shapes();
  require(shapes.back().size() == 3, ErrorKind::ShapeError,
          "fragment output must be a 4-D feature map, got per-sample " + shape_string(shapes.back()));
  Graph<float> g = fragment;
  detail::append_head(g, fragment.output_name(), shapes.back()[0], head, num_classes);
  g.set_num_classes(num_classes);
  for (const auto& n : head_layer_names()) {
    RandomStream rng = make_stream(seed, "init", n);
    g.layer(n).init(rng);
  }
  g.validate();
  return g;
}

/// Hash over every tensor of the layers that precede the head.
inline std::string backbone_hash(const Graph<float>& g) {
  const std::set<std::string> head(head_layer_names().begin(), head_layer_names().end());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& [name, t] : g.named_tensors()) {
    if (head.contains(name.substr(0, name.find('/')))) continue;
    h = io::fnv1a(reinterpret_cast<const unsigned char*>(name.data()), name.size(), h);
    h = io::fnv1a(reinterpret_cast<const unsigned char*>(t->ptr()), t->size() * sizeof(float), h);
  }
  return io::hex64(h);
}

struct FineTuneResult {
  nn::History history;
  std::string backbone_hash_before;
  std::string backbone_hash_after;
};

namespace detail {

/// Runs the frozen part of `g` (everything before head_gap) over a sample set.
inline std::shared_ptr<const std::vector<Sample>> backbone_features(Graph<float>& g, const std::vector<Sample>& in) {
  const std::string& cut = g.layer(head_layer_names()[0]).inputs()[0];
  auto out = std::make_shared<std::vector<Sample>>();
  for (const auto& s : in) {
    Shape bs{1};
    bs.insert(bs.end(), s.data.shape().begin(), s.data.shape().end());
    Tensor<float> x(bs, s.data.data());
    Tensor<float> f = g.forward_to(x, cut);
    Shape fs(f.shape().begin() + 1, f.shape().end());
    f.reshape(fs);
    out->push_back({s.clip_id, s.label, std::move(f)});
  }
  return out;
}

}  // namespace detail

/// Fine-tunes the head of `g` on the raw Train split with Val for callbacks.
/// Refuses to start when the manifest fails the leakage audit.
inline FineTuneResult fine_tune(Graph<float>& g, const Manifest& manifest, const TransferConfig& cfg) {
  cfg.validate();
  require_clean(manifest);
  for (const auto& n : head_layer_names())
    require(g.contains(n), ErrorKind::ShapeError, "fine_tune expects a graph from attach_head (missing " + n + ")");
  if (cfg.freeze_backbone)
    for (std::size_t i = 0; i < g.index_of(head_layer_names()[0]); ++i) g.layer(i).set_trainable(false);

  nn::TrainConfig tc = cfg.train;
  tc.adam.alpha = cfg.fine_tune_alpha;
  auto train_raw = std::make_shared<const std::vector<Sample>>(load_samples(manifest, Split::Train, false));
  auto val_raw = std::make_shared<const std::vector<Sample>>(load_samples(manifest, Split::Val, false));

  FineTuneResult r;
  r.backbone_hash_before = backbone_hash(g);
  bool frozen = true;
  for (std::size_t i = 0; i < g.index_of(head_layer_names()[0]); ++i) frozen = frozen && !g.layer(i).trainable();

  if (cfg.cache_features && frozen) {
    const auto train_f = detail::backbone_features(g, *train_raw);
    const auto val_f = detail::backbone_features(g, *val_raw);
    const Shape fshape = train_f->front().data.shape();
    Graph<float> head(fshape);
    for (const auto& n : head_layer_names()) {
      auto c = g.layer(n).clone();
      if (n == head_layer_names()[0]) c->set_inputs({nn::kGraphInput});
      head.add(std::move(c));
    }
    head.set_num_classes(g.num_classes());
    r.history = nn::train_loop(head, BatchStream(train_f, tc.batch_size, tc.seed),
                               BatchStream(val_f, tc.batch_size, tc.seed, false), tc);
    for (const auto& n : head_layer_names()) {
      auto dst = g.layer(n).params();
      auto src = head.layer(n).params();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
      auto db = g.layer(n).buffers();
      auto sb = head.layer(n).buffers();
      for (std::size_t i = 0; i < db.size(); ++i) *db[i].second = *sb[i].second;
    }
  } else {
    r.history = nn::train_loop(g, BatchStream(train_raw, tc.batch_size, tc.seed),
                               BatchStream(val_raw, tc.batch_size, tc.seed, false), tc);
  }
  r.backbone_hash_after = backbone_hash(g);
  return r;
}

}  // namespace vsm::transfer
