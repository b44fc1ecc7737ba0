// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Binary evaluation with Unstable as the positive class.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "vsm/audio.hpp"
#include "vsm/error.hpp"

namespace vsm::metrics {

inline constexpr int kPositive = static_cast<int>(Label::Unstable);

/// [[TP, FN], [FP, TN]]: rows are actual (positive first), columns predicted.
using Confusion = std::array<std::array<std::int64_t, 2>, 2>;

inline Confusion confusion_matrix(const std::vector<int>& labels, const std::vector<int>& predictions) {
  require(labels.size() == predictions.size(), ErrorKind::InputError,
          "labels and predictions differ in length (" + std::to_string(labels.size()) + " vs " +
              std::to_string(predictions.size()) + ")");
  require(!labels.empty(), ErrorKind::InputError, "no samples");
  Confusion c{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require((labels[i] == 0 || labels[i] == 1) && (predictions[i] == 0 || predictions[i] == 1), ErrorKind::InputError,
            "labels and predictions must be binary");
    const int a = labels[i] == kPositive ? 0 : 1;
    const int p = predictions[i] == kPositive ? 0 : 1;
    ++c[a][p];
  }
  return c;
}

struct Scores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // TP + FP == 0
  bool recall_undefined = false;     // TP + FN == 0
  bool f1_undefined = false;         // precision + recall == 0
};

inline Scores prf1(const Confusion& c) {
  const auto tp = static_cast<double>(c[0][0]), fn = static_cast<double>(c[0][1]);
  const auto fp = static_cast<double>(c[1][0]), tn = static_cast<double>(c[1][1]);
  require(tp >= 0 && fn >= 0 && fp >= 0 && tn >= 0, ErrorKind::InputError, "negative confusion entry");
  const double n = tp + fn + fp + tn;
  require(n > 0, ErrorKind::InputError, "empty confusion matrix");
  Scores s;
  s.accuracy = (tp + tn) / n;
  s.precision_undefined = tp + fp == 0;
  s.precision = s.precision_undefined ? 0.0 : tp / (tp + fp);
  s.recall_undefined = tp + fn == 0;
  s.recall = s.recall_undefined ? 0.0 : tp / (tp + fn);
  s.f1_undefined = s.precision + s.recall == 0.0;
  s.f1 = s.f1_undefined ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict positive when score >= threshold
};

/// Threshold sweep over descending unique scores, preceded by a sentinel
/// above the maximum. The curve starts at (0, 0) and ends at (1, 1).
inline std::vector<RocPoint> roc_curve(const std::vector<int>& labels, const std::vector<double>& scores) {
  require(labels.size() == scores.size() && !labels.empty(), ErrorKind::InputError, "labels and scores must align");
  std::int64_t P = 0, N = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::InputError, "labels must be binary");
    require(scores[i] >= 0.0 && scores[i] <= 1.0, ErrorKind::InputError, "scores must lie in [0, 1]");
    (labels[i] == kPositive ? P : N)++;
  }
  require(P > 0 && N > 0, ErrorKind::DegenerateLabels, "ROC needs both classes present");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc;
  const double top = scores[order.front()];
  roc.push_back({0.0, 0.0, std::nextafter(top, 2.0)});
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) (labels[order[i++]] == kPositive ? tp : fp)++;
    roc.push_back({static_cast<double>(fp) / static_cast<double>(N), static_cast<double>(tp) / static_cast<double>(P), thr});
  }
  if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) roc.push_back({1.0, 1.0, 0.0});
  return roc;
}

/// Trapezoidal area under the curve.
inline double auc(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return a;
}

struct EvalReport {
  Confusion confusion{};
  Scores scores;
  std::vector<RocPoint> roc;
  double auc = 0.0;
  std::size_t n_samples = 0;
};

/// `positive_scores` are positive-class probabilities used for the ROC sweep.
inline EvalReport evaluate(const std::vector<int>& labels, const std::vector<int>& pred,
                           const std::vector<double>& positive_scores) {
  EvalReport r;
  r.confusion = confusion_matrix(labels, pred);
  r.scores = prf1(r.confusion);
  r.roc = roc_curve(labels, positive_scores);
  r.auc = auc(r.roc);
  r.n_samples = labels.size();
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n_samples"] = r.n_samples;
  j["positive_class"] = "unstable";
  j["confusion"] = {{"tp", r.confusion[0][0]}, {"fn", r.confusion[0][1]}, {"fp", r.confusion[1][0]}, {"tn", r.confusion[1][1]}};
  j["accuracy"] = r.scores.accuracy;
  j["precision"] = r.scores.precision;
  j["recall"] = r.scores.recall;
  j["f1"] = r.scores.f1;
  j["precision_undefined"] = r.scores.precision_undefined;
  j["recall_undefined"] = r.scores.recall_undefined;
  j["f1_undefined"] = r.scores.f1_undefined;
  j["auc"] = r.auc;
  auto& roc = j["roc"] = nlohmann::ordered_json::array();
  for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr, p.threshold});
  return j;
}

inline EvalReport from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n_samples = j.at("n_samples").get<std::size_t>();
  const auto& c = j.at("confusion");
  r.confusion = {{{c.at("tp").get<std::int64_t>(), c.at("fn").get<std::int64_t>()},
                  {c.at("fp").get<std::int64_t>(), c.at("tn").get<std::int64_t>()}}};
  r.scores = {j.at("accuracy").get<double>(),           j.at("precision").get<double>(),
              j.at("recall").get<double>(),             j.at("f1").get<double>(),
              j.at("precision_undefined").get<bool>(), j.at("recall_undefined").get<bool>(),
              j.at("f1_undefined").get<bool>()};
  r.auc = j.at("auc").get<double>();
  for (const auto& p : j.at("roc")) r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  return r;
}

}  // namespace vsm::metrics
