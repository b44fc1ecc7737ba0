// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vsm/vsm.hpp"

namespace vsm {
namespace {

using metrics::Confusion;

constexpr int P = metrics::kPositive;
constexpr int N = 1 - metrics::kPositive;

std::pair<std::vector<int>, std::vector<double>> random_case(std::size_t n, std::uint64_t seed, int levels = 0) {
  RandomStream rng = make_stream(seed, "metrics");
  std::vector<int> labels(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng.bernoulli(0.5) ? P : N;
    scores[i] = levels > 0 ? static_cast<double>(rng.uniform_int(0, levels)) / levels : rng.uniform();
  }
  labels[0] = P;
  labels[1] = N;
  return {labels, scores};
}

TEST(Confusion, PerfectAndAllPositive) {
  const std::vector<int> y = {P, P, P, N, N};
  EXPECT_EQ(metrics::confusion_matrix(y, y), (Confusion{{{3, 0}, {0, 2}}}));
  const auto c = metrics::confusion_matrix(y, std::vector<int>(5, P));
  EXPECT_EQ(c[0][1], 0);
  EXPECT_EQ(c[1][1], 0);
}

TEST(Confusion, MatchesPairwiseCounting) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto [y, s] = random_case(37, seed);
    std::vector<int> pred(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] = s[i] > 0.5 ? P : N;
    std::int64_t tp = 0, fn = 0, fp = 0, tn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == P && pred[i] == P) ++tp;
      if (y[i] == P && pred[i] == N) ++fn;
      if (y[i] == N && pred[i] == P) ++fp;
      if (y[i] == N && pred[i] == N) ++tn;
    }
    EXPECT_EQ(metrics::confusion_matrix(y, pred), (Confusion{{{tp, fn}, {fp, tn}}}));
  }
}

TEST(Confusion, Errors) {
  EXPECT_ERROR_KIND(metrics::confusion_matrix({0, 1}, {0}), ErrorKind::InputError);
  EXPECT_ERROR_KIND(metrics::confusion_matrix({}, {}), ErrorKind::InputError);
  EXPECT_ERROR_KIND(metrics::confusion_matrix({0, 2}, {0, 1}), ErrorKind::InputError);
}

TEST(Prf1, PerfectScores) {
  const auto s = metrics::prf1(Confusion{{{3, 0}, {0, 2}}});
  EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(s.precision, 1.0);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.f1, 1.0);
  EXPECT_FALSE(s.precision_undefined || s.recall_undefined || s.f1_undefined);
}

TEST(Prf1, ZeroDenominatorsAreFlagged) {
  const auto s = metrics::prf1(Confusion{{{0, 4}, {0, 6}}});
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_TRUE(s.precision_undefined);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_FALSE(s.recall_undefined);
  EXPECT_TRUE(s.f1_undefined);
  EXPECT_DOUBLE_EQ(s.accuracy, 0.6);
  EXPECT_TRUE(metrics::prf1(Confusion{{{0, 0}, {2, 3}}}).recall_undefined);
  EXPECT_ERROR_KIND(metrics::prf1(Confusion{}), ErrorKind::InputError);
}

TEST(Prf1, TableShapedConsistencyCheck) {
  const auto s = metrics::prf1(Confusion{{{89, 11}, {4, 96}}});
  EXPECT_NEAR(s.precision, 89.0 / 93.0, 1e-12);
  EXPECT_NEAR(s.precision, 0.957, 5e-4);
  EXPECT_DOUBLE_EQ(s.recall, 0.89);
  EXPECT_DOUBLE_EQ(s.accuracy, 185.0 / 200.0);
  EXPECT_NEAR(s.f1, 2 * s.precision * s.recall / (s.precision + s.recall), 1e-15);
}

TEST(Roc, PerfectSeparationPassesThroughTopLeft) {
  const std::vector<int> y = {P, P, N, N};
  const auto roc = metrics::roc_curve(y, {0.9, 0.8, 0.2, 0.1});
  EXPECT_TRUE(std::ranges::any_of(roc, [](const auto& p) { return p.fpr == 0.0 && p.tpr == 1.0; }));
  EXPECT_DOUBLE_EQ(metrics::auc(roc), 1.0);
}

TEST(Roc, IdenticalScoresGiveDiagonal) {
  const auto roc = metrics::roc_curve({P, N, P, N, N}, std::vector<double>(5, 0.3));
  ASSERT_EQ(roc.size(), 2u);
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  EXPECT_DOUBLE_EQ(metrics::auc(roc), 0.5);
}

TEST(Roc, EveryPointMatchesDirectCounting) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto [y, s] = random_case(20, seed, seed % 2 ? 5 : 0);
    const auto roc = metrics::roc_curve(y, s);
    const double np = static_cast<double>(std::ranges::count(y, P));
    const double nn = static_cast<double>(std::ranges::count(y, N));
    EXPECT_EQ(roc.front().fpr, 0.0);
    EXPECT_EQ(roc.front().tpr, 0.0);
    EXPECT_EQ(roc.back().fpr, 1.0);
    EXPECT_EQ(roc.back().tpr, 1.0);
    for (std::size_t k = 0; k < roc.size(); ++k) {
      if (k > 0) {
        EXPECT_GE(roc[k].fpr, roc[k - 1].fpr);
        EXPECT_GE(roc[k].tpr, roc[k - 1].tpr);
        EXPECT_LT(roc[k].threshold, roc[k - 1].threshold);
      }
      double tp = 0, fp = 0;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (s[i] >= roc[k].threshold) (y[i] == P ? tp : fp) += 1;
      EXPECT_EQ(roc[k].tpr, tp / np) << "threshold " << roc[k].threshold;
      EXPECT_EQ(roc[k].fpr, fp / nn) << "threshold " << roc[k].threshold;
    }
  }
}

TEST(Roc, Errors) {
  EXPECT_ERROR_KIND(metrics::roc_curve({P, P}, {0.1, 0.2}), ErrorKind::DegenerateLabels);
  EXPECT_ERROR_KIND(metrics::roc_curve({P, N}, {0.1, 1.2}), ErrorKind::InputError);
  EXPECT_ERROR_KIND(metrics::roc_curve({P, N}, {0.1}), ErrorKind::InputError);
}

TEST(Auc, EqualsPairCountingStatistic) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t n = seed < 40 ? 2 + seed * 2 : 1000;
    auto [y, s] = random_case(n, seed, seed % 3 == 0 ? 10 : 0);
    EXPECT_NEAR(metrics::auc(metrics::roc_curve(y, s)), oracle::pair_auc(y, s), 1e-12) << "n=" << n;
  }
}

TEST(Auc, LabelFlipSymmetry) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto [y, s] = random_case(50, seed, seed % 2 ? 7 : 0);
    std::vector<int> yf(y.size());
    std::vector<double> sf(s.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      yf[i] = 1 - y[i];
      sf[i] = 1.0 - s[i];
    }
    EXPECT_NEAR(metrics::auc(metrics::roc_curve(y, s)), metrics::auc(metrics::roc_curve(yf, sf)), 1e-12);
  }
}

TEST(Evaluate, AccuracyMatchesTrainingLoopArgmax) {
  RandomStream rng = make_stream(3, "probs");
  std::vector<int> y, pred;
  std::vector<double> pos;
  Tensor<float> probs({40, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    const float p = static_cast<float>(rng.uniform());
    probs[2 * i + P] = p;
    probs[2 * i + N] = 1.0f - p;
    y.push_back(rng.bernoulli(0.5) ? P : N);
    pred.push_back(static_cast<int>(nn::argmax_row(probs, i)));
    pos.push_back(p);
  }
  const auto r = metrics::evaluate(y, pred, pos);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 40; ++i) hits += pred[i] == y[i];
  EXPECT_DOUBLE_EQ(r.scores.accuracy, static_cast<double>(hits) / 40.0);
  EXPECT_EQ(r.n_samples, 40u);
  const auto j = metrics::to_json(r);
  const auto back = metrics::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(metrics::to_json(back).dump(), j.dump());
}

}  // namespace
}  // namespace vsm
