// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance tests.
// Deliberately naive: nested loops, direct sums, brute-force counting.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "vsm/vsm.hpp"

namespace vsm::oracle {

/// |X[k]| for k = 0..n/2 by direct summation.
inline std::vector<double> dft_magnitudes(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k * t % n) / n;
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    out[k] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return out;
}

/// Magnitude STFT built frame by frame from the direct DFT. Centered frames use
/// reflect padding (numpy "reflect" convention, computed by explicit mirroring).
inline Array2D<double> stft_oracle(const std::vector<double>& x, std::size_t n_fft, std::size_t hop, bool hann,
                                   bool center) {
  std::vector<double> padded = x;
  if (center) {
    const std::size_t p = n_fft / 2;
    std::vector<double> ext;
    // Mirror repeatedly until the pad is filled (short clips).
    auto at = [&](std::ptrdiff_t i) {
      const auto n = static_cast<std::ptrdiff_t>(x.size());
      while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
      return x[static_cast<std::size_t>(i)];
    };
    for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(p); i < static_cast<std::ptrdiff_t>(x.size() + p); ++i)
      ext.push_back(at(i));
    padded = ext;
  }
  std::size_t frames;
  if (center) {
    frames = 1 + x.size() / hop;
  } else {
    frames = x.size() <= n_fft ? 1 : 1 + (x.size() - n_fft) / hop;
    padded.resize(std::max(padded.size(), (frames - 1) * hop + n_fft), 0.0);
  }
  Array2D<double> out(n_fft / 2 + 1, frames);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> frame(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i) {
      const double w = hann ? 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n_fft)) : 1.0;
      frame[i] = padded[t * hop + i] * w;
    }
    const auto mag = dft_magnitudes(frame);
    for (std::size_t k = 0; k < mag.size(); ++k) out(k, t) = mag[k];
  }
  return out;
}

/// Direct cross-correlation, NCHW input, [F,C,kh,kw] weights, zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t B, std::size_t C, std::size_t H,
                                  std::size_t W, const std::vector<double>& w, const std::vector<double>& b,
                                  std::size_t F, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                                  std::size_t& Ho, std::size_t& Wo) {
  Ho = (H + 2 * pad - kh) / stride + 1;
  Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> y(B * F * Ho * Wo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const auto r = static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad);
                const auto s = static_cast<std::ptrdiff_t>(j * stride + v) - static_cast<std::ptrdiff_t>(pad);
                if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(H) || s >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += x[((n * C + c) * H + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(s)] *
                       w[((f * C + c) * kh + u) * kw + v];
              }
          y[((n * F + f) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

/// Max pooling; padded cells never win.
inline std::vector<double> maxpool(const std::vector<double>& x, std::size_t B, std::size_t C, std::size_t H,
                                   std::size_t W, std::size_t k, std::size_t stride, std::size_t pad, std::size_t& Ho,
                                   std::size_t& Wo) {
  Ho = (H + 2 * pad - k) / stride + 1;
  Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> y(B * C * Ho * Wo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double best = -INFINITY;
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const auto r = static_cast<std::ptrdiff_t>(i * stride + u) - static_cast<std::ptrdiff_t>(pad);
              const auto s = static_cast<std::ptrdiff_t>(j * stride + v) - static_cast<std::ptrdiff_t>(pad);
              if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(H) || s >= static_cast<std::ptrdiff_t>(W)) continue;
              best = std::max(best, x[((n * C + c) * H + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(s)]);
            }
          y[((n * C + c) * Ho + i) * Wo + j] = best;
        }
  return y;
}

/// y[n][o] = b[o] + sum_i x[n][i] * w[i][o]
inline std::vector<double> dense(const std::vector<double>& x, std::size_t B, std::size_t in,
                                 const std::vector<double>& w, const std::vector<double>& b, std::size_t out) {
  std::vector<double> y(B * out);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[n * in + i] * w[i * out + o];
      y[n * out + o] = acc;
    }
  return y;
}

/// Probability that a random positive outranks a random negative, ties counting half.
inline double pair_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Scalar Adam recurrence written out step by step in double.
inline std::vector<double> adam_trace(double theta, const std::vector<double>& grads, double alpha, double b1,
                                      double b2, double eps) {
  std::vector<double> out;
  double m = 0, v = 0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    theta -= alpha * mh / (std::sqrt(vh) + eps);
    out.push_back(theta);
  }
  return out;
}

/// Relative error with a floor so exact zeros on both sides compare as equal.
inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max(std::abs(a), std::abs(b));
  return s < 1e-12 ? d : d / s;
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Central-difference check of a layer over `n_coords` random coordinates drawn
/// from its inputs and parameters. The objective is sum(r * layer(x)) for a
/// fixed random r, so the analytic gradient is backward() with dout = r.
inline GradCheck check_layer_gradients(nn::Layer<double>& layer, std::vector<Tensor<double>> inputs,
                                       const nn::ForwardContext& ctx, std::size_t n_coords, std::uint64_t seed,
                                       double h = 1e-5) {
  RandomStream rng = make_stream(seed, "gradcheck", layer.name());
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<const Tensor<double>*> ptrs;
    for (const auto& x : xs) ptrs.push_back(&x);
    Tensor<double> out;
    layer.forward(ptrs, out, ctx);
    return out;
  };
  const Tensor<double> y0 = eval(inputs);
  Tensor<double> r(y0.shape());
  for (auto& v : r.data()) v = rng.uniform(-1.0, 1.0);
  auto objective = [&](const std::vector<Tensor<double>>& xs) {
    const auto y = eval(xs);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };

  for (auto* p : layer.params()) p->grad.fill(0.0);
  std::vector<Tensor<double>> din;
  for (const auto& x : inputs) din.emplace_back(x.shape());
  {
    std::vector<const Tensor<double>*> ptrs;
    std::vector<Tensor<double>*> dptrs;
    for (auto& x : inputs) ptrs.push_back(&x);
    for (auto& d : din) dptrs.push_back(&d);
    Tensor<double> out;
    layer.forward(ptrs, out, ctx);
    layer.backward(ptrs, out, r, dptrs, true);
  }

  // Coordinate pool: (source, index) where source < inputs.size() is an input,
  // otherwise a parameter.
  auto params = layer.params();
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t s = 0; s < inputs.size(); ++s)
    for (std::size_t i = 0; i < inputs[s].size(); ++i) pool.emplace_back(s, i);
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) pool.emplace_back(inputs.size() + p, i);
  rng.shuffle(pool.begin(), pool.end());
  if (pool.size() > n_coords) pool.resize(n_coords);

  GradCheck res;
  for (const auto& [src, i] : pool) {
    double* slot;
    double analytic;
    std::string label;
    if (src < inputs.size()) {
      slot = &inputs[src][i];
      analytic = din[src][i];
      label = "input" + std::to_string(src) + "[" + std::to_string(i) + "]";
    } else {
      auto* p = params[src - inputs.size()];
      slot = &p->value[i];
      analytic = p->grad[i];
      label = p->name + "[" + std::to_string(i) + "]";
    }
    const double orig = *slot;
    *slot = orig + h;
    const double fp = objective(inputs);
    *slot = orig - h;
    const double fm = objective(inputs);
    *slot = orig;
    const double numeric = (fp - fm) / (2 * h);
    const double e = rel_err(analytic, numeric);
    ++res.checked;
    if (e > res.max_rel) {
      res.max_rel = e;
      res.worst = label + " analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
    }
  }
  return res;
}

/// Finite-difference check of the fused softmax/cross-entropy loss (plus L2)
/// with respect to every parameter coordinate sampled from the whole graph.
inline GradCheck check_graph_gradients(nn::Graph<double>& g, const Tensor<double>& x, const std::vector<int>& labels,
                                       std::size_t n_coords, std::uint64_t seed, double h = 1e-5) {
  const nn::ForwardContext ctx{true, seed, 0};
  nn::loss_and_backward(g, x, labels, ctx);
  std::vector<std::pair<nn::Param<double>*, std::size_t>> pool;
  std::vector<std::vector<double>> grads;
  for (std::size_t l = 0; l < g.size(); ++l) {
    if (!g.layer(l).trainable()) continue;
    for (auto* p : g.layer(l).params())
      for (std::size_t i = 0; i < p->value.size(); ++i) pool.emplace_back(p, i);
  }
  RandomStream rng = make_stream(seed, "graphcheck");
  rng.shuffle(pool.begin(), pool.end());
  if (pool.size() > n_coords) pool.resize(n_coords);
  std::vector<double> analytic;
  for (const auto& [p, i] : pool) analytic.push_back(p->grad[i]);

  auto loss = [&] {
    const auto& probs = g.forward(x, ctx);
    return nn::cross_entropy(probs, labels) + nn::l2_penalty(g);
  };
  GradCheck res;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    auto [p, i] = pool[k];
    const double orig = p->value[i];
    p->value[i] = orig + h;
    const double fp = loss();
    p->value[i] = orig - h;
    const double fm = loss();
    p->value[i] = orig;
    const double numeric = (fp - fm) / (2 * h);
    const double e = rel_err(analytic[k], numeric);
    ++res.checked;
    if (e > res.max_rel) {
      res.max_rel = e;
      res.worst = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[k]) + " numeric " +
                  std::to_string(numeric);
    }
  }
  return res;
}

/// Random tensor with entries uniform in [lo, hi).
template <class T = double>
Tensor<T> random_tensor(Shape s, RandomStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace vsm::oracle
