// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Epoch loop with checkpoint-on-improvement, plateau learning-rate reduction
// and early stopping.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/adam.hpp"
#include "vsm/dataset.hpp"
#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/loss.hpp"

namespace vsm::nn {

enum class StopMetric : std::uint8_t { ValLoss, ValAccuracy };

constexpr std::string_view to_string(StopMetric m) { return m == StopMetric::ValLoss ? "val_loss" : "val_accuracy"; }

inline StopMetric stop_metric_from_string(std::string_view s) {
  if (s == "val_loss") return StopMetric::ValLoss;
  if (s == "val_accuracy") return StopMetric::ValAccuracy;
  fail(ErrorKind::ConfigError, "unknown early-stop metric '" + std::string(s) + "'");
}

struct TrainConfig {
  int max_epochs = 250;
  int early_stop_patience = 10;
  StopMetric early_stop_metric = StopMetric::ValLoss;
  std::size_t batch_size = 16;
  AdamHyper adam{};
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  double min_alpha = 1e-7;
  std::uint64_t seed = 0;

  void validate() const {
    require(max_epochs >= 1, ErrorKind::InvalidParam, "max_epochs must be >= 1");
    require(early_stop_patience >= 1, ErrorKind::InvalidParam, "early_stop_patience must be >= 1");
    require(plateau_patience >= 1, ErrorKind::InvalidParam, "plateau_patience must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor < 1.0, ErrorKind::InvalidParam, "plateau_factor must lie in (0, 1)");
    require(min_alpha >= 0.0, ErrorKind::InvalidParam, "min_alpha must be >= 0");
    require(batch_size >= 1, ErrorKind::InvalidParam, "batch_size must be >= 1");
    adam.validate();
  }
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double alpha = 0.0;  // learning rate used during this epoch
  bool checkpoint = false;
  bool lr_reduced = false;
};

struct History {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;     // epoch whose weights were returned
  int stopped_epoch = 0;  // epoch at which early stopping fired; 0 if it never did
  std::vector<int> lr_reduction_epochs;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["stopped_epoch"] = stopped_epoch;
    j["lr_reduction_epochs"] = lr_reduction_epochs;
    auto& es = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs)
      es.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_accuracy},
                    {"alpha", e.alpha},
                    {"checkpoint", e.checkpoint},
                    {"lr_reduced", e.lr_reduced}});
    return j;
  }
};

/// Callback state machine, driven once per epoch with validation metrics.
/// Checkpointing and plateau detection watch validation loss; early stopping
/// watches the configured metric. Improvement is always strict.
class CallbackController {
 public:
  struct Decision {
    bool checkpoint = false;
    bool lr_reduced = false;
    double alpha = 0.0;  // learning rate for the next epoch
    bool stop = false;
  };

  explicit CallbackController(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    stop_best_ = cfg.early_stop_metric == StopMetric::ValLoss ? kInf : -kInf;
  }

  Decision on_epoch_end(double val_loss, double val_accuracy, double alpha) {
    Decision d;
    d.alpha = alpha;

    if (val_loss < ckpt_best_) {
      ckpt_best_ = val_loss;
      d.checkpoint = true;
    }

    if (val_loss < plateau_best_) {
      plateau_best_ = val_loss;
      plateau_wait_ = 0;
    } else if (++plateau_wait_ >= cfg_.plateau_patience && alpha > cfg_.min_alpha) {
      d.alpha = std::max(alpha * cfg_.plateau_factor, cfg_.min_alpha);
      d.lr_reduced = true;
      plateau_wait_ = 0;
    }

    const bool by_loss = cfg_.early_stop_metric == StopMetric::ValLoss;
    const double current = by_loss ? val_loss : val_accuracy;
    if (by_loss ? current < stop_best_ : current > stop_best_) {
      stop_best_ = current;
      stop_wait_ = 0;
    } else if (++stop_wait_ >= cfg_.early_stop_patience) {
      d.stop = true;
    }
    return d;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  TrainConfig cfg_;
  double ckpt_best_ = kInf;
  double plateau_best_ = kInf;
  int plateau_wait_ = 0;
  double stop_best_;
  int stop_wait_ = 0;
};

/// Thrown when training hits a non-finite loss; carries the epochs completed so far.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& msg, History partial)
      : Error(ErrorKind::NumericalError, msg), history_(std::move(partial)) {}
  const History& history() const noexcept { return history_; }

 private:
  History history_;
};

struct StreamEval {
  double loss = 0.0;  // cross-entropy + L2 penalty
  double accuracy = 0.0;
  Tensor<float> probs;  // [N x C] in sample order
  std::vector<int> labels;
};

/// Inference-mode pass over every sample in stored order.
inline StreamEval evaluate_stream(Graph<float>& g, const BatchStream& s) {
  require(s.size() > 0, ErrorKind::InvalidParam, "cannot evaluate an empty stream");
  StreamEval r;
  const std::size_t C = g.num_classes() ? g.num_classes() : 2;
  r.probs = Tensor<float>({s.size(), C});
  double ce = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < s.size(); start += s.batch_size()) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(s.size(), start + s.batch_size()); ++i) idx.push_back(i);
    const auto batch = s.make_batch(idx);
    const auto& p = g.forward(batch.inputs);
    require(p.dim(1) == C, ErrorKind::ShapeError, "graph output width does not match num_classes");
    ce += cross_entropy(p, batch.labels) * static_cast<double>(idx.size());
    correct += count_correct(p, batch.labels);
    std::copy(p.data().begin(), p.data().end(), r.probs.data().begin() + static_cast<std::ptrdiff_t>(start * C));
    r.labels.insert(r.labels.end(), batch.labels.begin(), batch.labels.end());
  }
  r.loss = ce / static_cast<double>(s.size()) + l2_penalty(g);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(s.size());
  return r;
}

using EpochObserver = std::function<void(const EpochMetrics&)>;

/// Trains `g` in place and leaves it holding the best-checkpoint weights.
inline History train_loop(Graph<float>& g, const BatchStream& train, const BatchStream& val, const TrainConfig& cfg,
                          const EpochObserver& observer = {}) {
  cfg.validate();
  require(train.size() > 0 && val.size() > 0, ErrorKind::InvalidParam, "train and validation streams must be non-empty");
  AdamState<float> opt(cfg.adam);
  CallbackController callbacks(cfg);
  History h;
  auto best = g.state();
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    em.alpha = opt.alpha();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : train.epoch_batches(static_cast<std::uint64_t>(epoch))) {
      const auto batch = train.make_batch(idx);
      LossResult lr;
      try {
        lr = loss_and_backward(g, batch.inputs, batch.labels, ForwardContext{true, cfg.seed, step++});
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::NumericalError) throw TrainingAborted(e.what(), h);
        throw;
      }
      opt.step(g);
      loss_sum += lr.loss * static_cast<double>(idx.size());
      correct += lr.correct;
    }
    em.train_loss = loss_sum / static_cast<double>(train.size());
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());

    const auto v = evaluate_stream(g, val);
    em.val_loss = v.loss;
    em.val_accuracy = v.accuracy;
    if (!std::isfinite(em.val_loss)) throw TrainingAborted("non-finite validation loss", h);

    const auto d = callbacks.on_epoch_end(em.val_loss, em.val_accuracy, opt.alpha());
    em.checkpoint = d.checkpoint;
    em.lr_reduced = d.lr_reduced;
    if (d.checkpoint) {
      best = g.state();
      h.best_epoch = epoch;
    }
    if (d.lr_reduced) {
      opt.set_alpha(d.alpha);
      h.lr_reduction_epochs.push_back(epoch);
    }
    h.epochs.push_back(em);
    if (observer) observer(em);
    if (d.stop) {
      h.stopped_epoch = epoch;
      break;
    }
  }
  g.load_state(best);
  return h;
}

}  // namespace vsm::nn
