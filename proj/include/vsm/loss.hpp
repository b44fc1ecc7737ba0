// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/layers.hpp"
#include "vsm/tensor.hpp"

namespace vsm::nn {

inline constexpr double kProbFloor = 1e-12;

/// Mean categorical cross-entropy for class-index labels.
template <class T>
double cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels) {
  require(probs.rank() == 2 && probs.dim(0) == labels.size() && !labels.empty(), ErrorKind::LabelError,
          "labels do not match probability rows");
  const std::size_t C = probs.dim(1);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < C, ErrorKind::LabelError,
            "label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(C) + ")");
    sum += std::log(std::max(static_cast<double>(probs.at(i, static_cast<std::size_t>(labels[i]))), kProbFloor));
  }
  return -sum / static_cast<double>(labels.size());
}

/// Converts one-hot rows to class indices; anything else raises LabelError.
template <class T>
std::vector<int> labels_from_onehot(const Tensor<T>& onehot) {
  require(onehot.rank() == 2, ErrorKind::LabelError, "one-hot labels must be [B x C]");
  std::vector<int> out;
  for (std::size_t i = 0; i < onehot.dim(0); ++i) {
    int hot = -1;
    for (std::size_t c = 0; c < onehot.dim(1); ++c) {
      const T v = onehot.at(i, c);
      if (v == T{1} && hot < 0) {
        hot = static_cast<int>(c);
      } else {
        require(v == T{}, ErrorKind::LabelError, "row " + std::to_string(i) + " is not one-hot");
      }
    }
    require(hot >= 0, ErrorKind::LabelError, "row " + std::to_string(i) + " is not one-hot");
    out.push_back(hot);
  }
  return out;
}

template <class T>
double cross_entropy(const Tensor<T>& probs, const Tensor<T>& onehot) {
  return cross_entropy(probs, labels_from_onehot(onehot));
}

/// Sum over layers with l2 > 0 of l2 * ||W||^2 (weights only, biases excluded).
template <class T>
double l2_penalty(const Graph<T>& g) {
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& l = g.layer(i);
    if (l.l2() <= 0.0) continue;
    double sq = 0.0;
    for (const auto* p : l.params())
      if (p->name == "weight")
        for (T w : p->value.data()) sq += static_cast<double>(w) * static_cast<double>(w);
    total += l.l2() * sq;
  }
  return total;
}

/// Adds 2*l2*W to the weight gradients of trainable regularized layers.
template <class T>
void add_l2_grad(Graph<T>& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto& l = g.layer(i);
    if (l.l2() <= 0.0 || !l.trainable()) continue;
    for (auto* p : l.params())
      if (p->name == "weight")
        for (std::size_t e = 0; e < p->value.size(); ++e)
          p->grad[e] += static_cast<T>(2.0 * l.l2()) * p->value[e];
  }
}

struct LossResult {
  double loss = 0.0;       // cross-entropy + L2 penalty
  double data_loss = 0.0;  // cross-entropy alone
  std::size_t correct = 0;
};

/// Row argmax with ties toward the lower class index.
template <class T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.dim(1); ++c)
    if (probs.at(row, c) > probs.at(row, best)) best = c;
  return best;
}

template <class T>
std::size_t count_correct(const Tensor<T>& probs, const std::vector<int>& labels) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) n += argmax_row(probs, i) == static_cast<std::size_t>(labels[i]);
  return n;
}

/// Forward, loss and backward for a graph whose last layer is Softmax. The
/// softmax/cross-entropy pair is fused: the gradient at the softmax input is
/// (p - onehot(y)) / B. Parameter gradients are zeroed first.
template <class T>
LossResult loss_and_backward(Graph<T>& g, const Tensor<T>& x, const std::vector<int>& labels,
                             const ForwardContext& ctx) {
  const std::size_t last = g.size() - 1;
  require(g.layer(last).kind() == LayerKind::Softmax && g.layer(last).inputs().size() == 1 &&
              g.layer(last).inputs()[0] != kGraphInput,
          ErrorKind::ShapeError, "loss_and_backward expects a graph ending in Softmax");
  const Tensor<T>& probs = g.forward(x, ctx);
  LossResult r;
  r.data_loss = cross_entropy(probs, labels);
  r.loss = r.data_loss + l2_penalty(g);
  r.correct = count_correct(probs, labels);
  require(std::isfinite(r.loss), ErrorKind::NumericalError, "non-finite loss");

  const std::size_t B = labels.size();
  Tensor<T> dz = probs;
  for (std::size_t i = 0; i < B; ++i) dz.at(i, static_cast<std::size_t>(labels[i])) -= T{1};
  for (auto& v : dz.data()) v /= static_cast<T>(B);
  g.zero_grad();
  g.backward(g.index_of(g.layer(last).inputs()[0]), dz);
  add_l2_grad(g);
  return r;
}

}  // namespace vsm::nn
