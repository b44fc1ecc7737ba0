// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/tensor.hpp"

namespace vsm::nn {

struct AdamHyper {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const {
    require(alpha > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
            ErrorKind::InvalidParam, "invalid Adam hyperparameters");
  }
};

/// One Adam update over a flat parameter block. `t` is the step number after
/// incrementing (1 on the first call).
template <class T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamHyper& h) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const auto b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T{1} - b1) * g;
    v[i] = b2 * v[i] + (T{1} - b2) * g * g;
    const double mhat = static_cast<double>(m[i]) / c1;
    const double vhat = static_cast<double>(v[i]) / c2;
    theta[i] = static_cast<T>(static_cast<double>(theta[i]) - h.alpha * mhat / (std::sqrt(vhat) + h.epsilon));
  }
}

/// Adam over a graph. Moments exist only for parameters of trainable layers
/// and are allocated on first update.
template <class T>
class AdamState {
 public:
  explicit AdamState(AdamHyper h = {}) : h_(h) { h_.validate(); }

  const AdamHyper& hyper() const noexcept { return h_; }
  double alpha() const noexcept { return h_.alpha; }
  void set_alpha(double a) {
    require(a > 0.0, ErrorKind::InvalidParam, "learning rate must be positive");
    h_.alpha = a;
  }
  std::uint64_t step_count() const noexcept { return t_; }
  bool has_moments(const std::string& name) const { return moments_.contains(name); }
  std::size_t moment_count() const noexcept { return moments_.size(); }

  /// Applies one update; returns the names ("layer/param") that were updated.
  std::vector<std::string> step(Graph<T>& g) {
    ++t_;
    std::vector<std::string> updated;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto& l = g.layer(i);
      if (!l.trainable()) continue;
      for (auto* p : l.params()) {
        const std::string key = l.name() + "/" + p->name;
        require(p->grad.size() == p->value.size(), ErrorKind::ShapeError, key + ": gradient not allocated");
        require(p->grad.all_finite(), ErrorKind::NumericalError, key + ": non-finite gradient");
        auto& mv = moments_[key];
        if (mv.m.empty()) {
          mv.m.assign(p->value.size(), T{});
          mv.v.assign(p->value.size(), T{});
        }
        adam_update<T>(p->value.span(), p->grad.span(), mv.m, mv.v, t_, h_);
        updated.push_back(key);
      }
    }
    return updated;
  }

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  AdamHyper h_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace vsm::nn
