// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Layer vocabulary for the CNN engine. Every layer is templated on the scalar
// type so the same graph can run in float for training and in double for
// gradient checks.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vsm/error.hpp"
#include "vsm/rng.hpp"
#include "vsm/tensor.hpp"

namespace vsm::nn {

enum class LayerKind : std::uint8_t {
  Conv2D,
  MaxPool2D,
  GlobalAvgPool,
  BatchNorm,
  Dropout,
  Dense,
  ReLU,
  Softmax,
  Concat,
  Flatten,
};

constexpr std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::MaxPool2D: return "MaxPool2D";
    case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Dense: return "Dense";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Softmax: return "Softmax";
    case LayerKind::Concat: return "Concat";
    case LayerKind::Flatten: return "Flatten";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::Conv2D, LayerKind::MaxPool2D, LayerKind::GlobalAvgPool, LayerKind::BatchNorm,
                 LayerKind::Dropout, LayerKind::Dense, LayerKind::ReLU, LayerKind::Softmax, LayerKind::Concat,
                 LayerKind::Flatten})
    if (to_string(k) == s) return k;
  fail(ErrorKind::ShapeError, "unknown layer kind '" + std::string(s) + "'");
}

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

struct ForwardContext {
  bool training = false;
  std::uint64_t seed = 0;  // dropout masks are keyed by (seed, layer, step)
  std::uint64_t step = 0;
};

template <class T>
class Layer {
 public:
  Layer(std::string name, std::vector<std::string> inputs) : name_(std::move(name)), inputs_(std::move(inputs)) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  /// Per-sample output shape (no batch dimension) given per-sample input shapes.
  virtual Shape output_shape(const std::vector<Shape>& in) const = 0;
  virtual void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext& ctx) = 0;
  /// Accumulates parameter gradients when `param_grads` is set and writes input
  /// gradients into each non-null `din` slot (overwriting).
  virtual void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& out, const Tensor<T>& dout,
                        const std::vector<Tensor<T>*>& din, bool param_grads) = 0;
  virtual nlohmann::json config() const { return nlohmann::json::object(); }
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual std::vector<Param<T>*> params() { return {}; }
  /// Non-trainable state that must persist (batch-norm running statistics).
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
  virtual void init(RandomStream&) {}
  /// L2 coefficient applied to this layer's weight matrix; 0 disables.
  virtual double l2() const { return 0.0; }

  std::vector<const Param<T>*> params() const {
    auto ps = const_cast<Layer*>(this)->params();
    return {ps.begin(), ps.end()};
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& inputs() const noexcept { return inputs_; }
  void set_inputs(std::vector<std::string> in) { inputs_ = std::move(in); }
  bool trainable() const noexcept { return trainable_; }
  void set_trainable(bool t) noexcept { trainable_ = t; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->value.size();
    return n;
  }

 protected:
  void expect_inputs(const std::vector<Shape>& in, std::size_t n) const {
    require(in.size() == n, ErrorKind::ShapeError,
            name_ + ": expected " + std::to_string(n) + " input(s), got " + std::to_string(in.size()));
  }
  void expect_rank(const Shape& s, std::size_t rank) const {
    require(s.size() == rank, ErrorKind::ShapeError,
            name_ + ": expected rank-" + std::to_string(rank) + " per-sample input, got " + shape_string(s));
  }

  std::string name_;
  std::vector<std::string> inputs_;
  bool trainable_ = true;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using MapConstMat = Eigen::Map<const RowMat<T>>;
template <class T>
using MapConstVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  require(in + 2 * pad >= k, ErrorKind::ShapeError,
          "kernel " + std::to_string(k) + " larger than padded extent " + std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

template <class T>
void he_uniform(Tensor<T>& t, std::size_t fan_in, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

/// 2-D cross-correlation, NCHW, lowered to a GEMM through im2col.
template <class T>
class Conv2D final : public Layer<T> {
 public:
  struct Config {
    std::size_t in_channels = 1;
    std::size_t filters = 1;
    std::size_t kh = 3, kw = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;
  };

  Conv2D(std::string name, std::vector<std::string> inputs, Config cfg)
      : Layer<T>(std::move(name), std::move(inputs)), cfg_(cfg) {
    require(cfg.in_channels > 0 && cfg.filters > 0 && cfg.kh > 0 && cfg.kw > 0 && cfg.stride > 0,
            ErrorKind::ShapeError, this->name_ + ": invalid convolution config");
    weight_ = {"weight", Tensor<T>({cfg.filters, cfg.in_channels, cfg.kh, cfg.kw}), {}};
    bias_ = {"bias", Tensor<T>({cfg.filters}), {}};
    weight_.grad = Tensor<T>(weight_.value.shape());
    bias_.grad = Tensor<T>(bias_.value.shape());
  }

  LayerKind kind() const override { return LayerKind::Conv2D; }
  const Config& cfg() const noexcept { return cfg_; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    this->expect_rank(in[0], 3);
    require(in[0][0] == cfg_.in_channels, ErrorKind::ShapeError,
            this->name_ + ": expects " + std::to_string(cfg_.in_channels) + " channels, got " + shape_string(in[0]));
    return {cfg_.filters, detail::conv_out(in[0][1], cfg_.kh, cfg_.stride, cfg_.pad),
            detail::conv_out(in[0][2], cfg_.kw, cfg_.stride, cfg_.pad)};
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const auto& x = *in[0];
    const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const auto os = output_shape({{x.dim(1), H, W}});
    const std::size_t Ho = os[1], Wo = os[2], P = Ho * Wo, K = cfg_.in_channels * cfg_.kh * cfg_.kw;
    out.assign_zero({B, cfg_.filters, Ho, Wo});
    const detail::MapConstMat<T> w(weight_.value.ptr(), static_cast<Eigen::Index>(cfg_.filters), static_cast<Eigen::Index>(K));
    const detail::MapConstVec<T> b(bias_.value.ptr(), static_cast<Eigen::Index>(cfg_.filters));
    for (std::size_t n = 0; n < B; ++n) {
      const T* col = lowered(x, n, H, W, Ho, Wo);
      detail::MapConstMat<T> colm(col, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      detail::MapMat<T> y(out.ptr() + n * cfg_.filters * P, static_cast<Eigen::Index>(cfg_.filters), static_cast<Eigen::Index>(P));
      y.noalias() = w * colm;
      y.colwise() += b;
    }
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool param_grads) override {
    const auto& x = *in[0];
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Ho = dout.dim(2), Wo = dout.dim(3), P = Ho * Wo, K = C * cfg_.kh * cfg_.kw;
    const auto F = static_cast<Eigen::Index>(cfg_.filters);
    const detail::MapConstMat<T> w(weight_.value.ptr(), F, static_cast<Eigen::Index>(K));
    detail::MapMat<T> dw(weight_.grad.ptr(), F, static_cast<Eigen::Index>(K));
    detail::MapVec<T> db(bias_.grad.ptr(), F);
    Tensor<T>* dx = din[0];
    if (dx) dx->assign_zero(x.shape());
    std::vector<T> dcol;
    for (std::size_t n = 0; n < B; ++n) {
      detail::MapConstMat<T> dy(dout.ptr() + n * cfg_.filters * P, F, static_cast<Eigen::Index>(P));
      if (param_grads) {
        const T* col = lowered(x, n, H, W, Ho, Wo);
        detail::MapConstMat<T> colm(col, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        dw.noalias() += dy * colm.transpose();
        db += dy.rowwise().sum();
      }
      if (dx) {
        if (pointwise()) {
          detail::MapMat<T> dxn(dx->ptr() + n * C * H * W, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
          dxn.noalias() = w.transpose() * dy;
        } else {
          dcol.resize(K * P);
          detail::MapMat<T> dcolm(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
          dcolm.noalias() = w.transpose() * dy;
          col2im(dcol.data(), dx->ptr() + n * C * H * W, C, H, W, Ho, Wo);
        }
      }
    }
  }

  nlohmann::json config() const override {
    return {{"in_channels", cfg_.in_channels}, {"filters", cfg_.filters}, {"kh", cfg_.kh},
            {"kw", cfg_.kw},                   {"stride", cfg_.stride},   {"pad", cfg_.pad}};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2D>(*this); }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  void init(RandomStream& rng) override {
    detail::he_uniform(weight_.value, cfg_.in_channels * cfg_.kh * cfg_.kw, rng);
    bias_.value.fill(T{});
  }

  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }

 private:
  bool pointwise() const noexcept { return cfg_.kh == 1 && cfg_.kw == 1 && cfg_.stride == 1 && cfg_.pad == 0; }

  // Returns a [K x P] view of sample n's receptive fields. 1x1 convolutions read the input directly.
  const T* lowered(const Tensor<T>& x, std::size_t n, std::size_t H, std::size_t W, std::size_t Ho, std::size_t Wo) {
    const std::size_t C = x.dim(1);
    const T* src = x.ptr() + n * C * H * W;
    if (pointwise()) return src;
    const std::size_t P = Ho * Wo;
    col_.resize(C * cfg_.kh * cfg_.kw * P);
    const auto pad = static_cast<std::ptrdiff_t>(cfg_.pad);
    const auto s = static_cast<std::ptrdiff_t>(cfg_.stride);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < cfg_.kh; ++ki)
        for (std::size_t kj = 0; kj < cfg_.kw; ++kj) {
          T* dst = col_.data() + ((c * cfg_.kh + ki) * cfg_.kw + kj) * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - pad + static_cast<std::ptrdiff_t>(ki);
            T* row = dst + oy * Wo;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
              std::fill_n(row, Wo, T{});
              continue;
            }
            const T* in_row = src + (c * H + static_cast<std::size_t>(iy)) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s - pad + static_cast<std::ptrdiff_t>(kj);
              row[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) ? in_row[ix] : T{};
            }
          }
        }
    return col_.data();
  }

  void col2im(const T* col, T* dx, std::size_t C, std::size_t H, std::size_t W, std::size_t Ho, std::size_t Wo) const {
    const std::size_t P = Ho * Wo;
    const auto pad = static_cast<std::ptrdiff_t>(cfg_.pad);
    const auto s = static_cast<std::ptrdiff_t>(cfg_.stride);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < cfg_.kh; ++ki)
        for (std::size_t kj = 0; kj < cfg_.kw; ++kj) {
          const T* srcp = col + ((c * cfg_.kh + ki) * cfg_.kw + kj) * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - pad + static_cast<std::ptrdiff_t>(ki);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            T* out_row = dx + (c * H + static_cast<std::size_t>(iy)) * W;
            const T* row = srcp + oy * Wo;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s - pad + static_cast<std::ptrdiff_t>(kj);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) out_row[ix] += row[ox];
            }
          }
        }
  }

  Config cfg_;
  Param<T> weight_;
  Param<T> bias_;
  std::vector<T> col_;
};

/// Max pooling; padded positions never win.
template <class T>
class MaxPool2D final : public Layer<T> {
 public:
  struct Config {
    std::size_t k = 2;
    std::size_t stride = 2;
    std::size_t pad = 0;
  };

  MaxPool2D(std::string name, std::vector<std::string> inputs, Config cfg)
      : Layer<T>(std::move(name), std::move(inputs)), cfg_(cfg) {
    require(cfg.k > 0 && cfg.stride > 0 && cfg.pad < cfg.k, ErrorKind::ShapeError, this->name_ + ": invalid pool config");
  }

  LayerKind kind() const override { return LayerKind::MaxPool2D; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    this->expect_rank(in[0], 3);
    return {in[0][0], detail::conv_out(in[0][1], cfg_.k, cfg_.stride, cfg_.pad),
            detail::conv_out(in[0][2], cfg_.k, cfg_.stride, cfg_.pad)};
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const auto& x = *in[0];
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto os = output_shape({{C, H, W}});
    const std::size_t Ho = os[1], Wo = os[2];
    out.assign_zero({B, C, Ho, Wo});
    argmax_.resize(out.size());
    const auto pad = static_cast<std::ptrdiff_t>(cfg_.pad);
    std::size_t o = 0;
    for (std::size_t nc = 0; nc < B * C; ++nc) {
      const T* plane = x.ptr() + nc * H * W;
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t arg = 0;
          bool found = false;
          for (std::size_t ki = 0; ki < cfg_.k; ++ki) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * cfg_.stride + ki) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kj = 0; kj < cfg_.k; ++kj) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * cfg_.stride + kj) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t idx = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
              if (!found || plane[idx] > best) {
                best = plane[idx];
                arg = idx;
                found = true;
              }
            }
          }
          out[o] = best;
          argmax_[o] = nc * H * W + arg;
        }
    }
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    din[0]->assign_zero(in[0]->shape());
    for (std::size_t o = 0; o < dout.size(); ++o) (*din[0])[argmax_[o]] += dout[o];
  }

  nlohmann::json config() const override { return {{"k", cfg_.k}, {"stride", cfg_.stride}, {"pad", cfg_.pad}}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2D>(*this); }

 private:
  Config cfg_;
  std::vector<std::size_t> argmax_;
};

/// [B, C, H, W] -> [B, C] spatial mean.
template <class T>
class GlobalAvgPool final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::GlobalAvgPool; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    this->expect_rank(in[0], 3);
    return {in[0][0]};
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const auto& x = *in[0];
    const std::size_t BC = x.dim(0) * x.dim(1), S = x.dim(2) * x.dim(3);
    out.assign_zero({x.dim(0), x.dim(1)});
    for (std::size_t i = 0; i < BC; ++i) {
      T acc{};
      const T* p = x.ptr() + i * S;
      for (std::size_t s = 0; s < S; ++s) acc += p[s];
      out[i] = acc / static_cast<T>(S);
    }
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    const auto& x = *in[0];
    const std::size_t S = x.dim(2) * x.dim(3);
    din[0]->assign_zero(x.shape());
    for (std::size_t i = 0; i < dout.size(); ++i) std::fill_n(din[0]->ptr() + i * S, S, dout[i] / static_cast<T>(S));
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

/// Per-channel batch normalization over [B, C] or [B, C, H, W]. Training mode
/// standardizes with batch statistics and updates running statistics with
/// `momentum`; inference mode (and any frozen instance) uses running statistics.
template <class T>
class BatchNorm final : public Layer<T> {
 public:
  struct Config {
    std::size_t channels = 1;
    double momentum = 0.9;
    double eps = 1e-5;
  };

  BatchNorm(std::string name, std::vector<std::string> inputs, Config cfg)
      : Layer<T>(std::move(name), std::move(inputs)), cfg_(cfg) {
    gamma_ = {"gamma", Tensor<T>({cfg.channels}, T{1}), Tensor<T>({cfg.channels})};
    beta_ = {"beta", Tensor<T>({cfg.channels}), Tensor<T>({cfg.channels})};
    running_mean_ = Tensor<T>({cfg.channels});
    running_var_ = Tensor<T>({cfg.channels}, T{1});
  }

  LayerKind kind() const override { return LayerKind::BatchNorm; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    require((in[0].size() == 1 || in[0].size() == 3) && in[0][0] == cfg_.channels, ErrorKind::ShapeError,
            this->name_ + ": expects " + std::to_string(cfg_.channels) + " channels, got " + shape_string(in[0]));
    return in[0];
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext& ctx) override {
    const auto& x = *in[0];
    const std::size_t B = x.dim(0), C = cfg_.channels, S = x.size() / (B * C);
    out.assign_zero(x.shape());
    batch_mode_ = ctx.training && this->trainable_;
    inv_std_.assign(C, T{});
    if (batch_mode_) {
      require(B >= 2, ErrorKind::BatchTooSmall, this->name_ + ": training-mode batch norm needs batch size >= 2");
      xhat_.assign(x.size(), T{});
      const double N = static_cast<double>(B * S);
      for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t n = 0; n < B; ++n) {
          const T* p = x.ptr() + (n * C + c) * S;
          for (std::size_t s = 0; s < S; ++s) mean += p[s];
        }
        mean /= N;
        double var = 0.0;
        for (std::size_t n = 0; n < B; ++n) {
          const T* p = x.ptr() + (n * C + c) * S;
          for (std::size_t s = 0; s < S; ++s) var += (p[s] - mean) * (p[s] - mean);
        }
        var /= N;
        const double inv = 1.0 / std::sqrt(var + cfg_.eps);
        inv_std_[c] = static_cast<T>(inv);
        for (std::size_t n = 0; n < B; ++n) {
          const std::size_t off = (n * C + c) * S;
          for (std::size_t s = 0; s < S; ++s) {
            const T xh = static_cast<T>((x[off + s] - mean) * inv);
            xhat_[off + s] = xh;
            out[off + s] = gamma_.value[c] * xh + beta_.value[c];
          }
        }
        running_mean_[c] = static_cast<T>(cfg_.momentum * running_mean_[c] + (1.0 - cfg_.momentum) * mean);
        running_var_[c] = static_cast<T>(cfg_.momentum * running_var_[c] + (1.0 - cfg_.momentum) * var);
      }
    } else {
      for (std::size_t c = 0; c < C; ++c) {
        const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[c]) + cfg_.eps));
        inv_std_[c] = inv;
        for (std::size_t n = 0; n < B; ++n) {
          const std::size_t off = (n * C + c) * S;
          for (std::size_t s = 0; s < S; ++s)
            out[off + s] = gamma_.value[c] * (x[off + s] - running_mean_[c]) * inv + beta_.value[c];
        }
      }
    }
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool param_grads) override {
    const auto& x = *in[0];
    const std::size_t B = x.dim(0), C = cfg_.channels, S = x.size() / (B * C);
    Tensor<T>* dx = din[0];
    if (dx) dx->assign_zero(x.shape());
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < B; ++n) {
        const std::size_t off = (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) {
          const double xh = batch_mode_ ? static_cast<double>(xhat_[off + s])
                                        : (static_cast<double>(x[off + s]) - running_mean_[c]) * inv_std_[c];
          sum_dy += dout[off + s];
          sum_dy_xhat += dout[off + s] * xh;
        }
      }
      if (param_grads) {
        gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
        beta_.grad[c] += static_cast<T>(sum_dy);
      }
      if (!dx) continue;
      const double g = gamma_.value[c], inv = inv_std_[c];
      const double N = static_cast<double>(B * S);
      for (std::size_t n = 0; n < B; ++n) {
        const std::size_t off = (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) {
          if (batch_mode_) {
            const double xh = xhat_[off + s];
            (*dx)[off + s] = static_cast<T>(g * inv / N * (N * dout[off + s] - sum_dy - xh * sum_dy_xhat));
          } else {
            (*dx)[off + s] = static_cast<T>(g * inv * dout[off + s]);
          }
        }
      }
    }
  }

  nlohmann::json config() const override {
    return {{"channels", cfg_.channels}, {"momentum", cfg_.momentum}, {"eps", cfg_.eps}};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }
  void init(RandomStream&) override {
    gamma_.value.fill(T{1});
    beta_.value.fill(T{});
    running_mean_.fill(T{});
    running_var_.fill(T{1});
  }

  Param<T>& gamma() noexcept { return gamma_; }
  Param<T>& beta() noexcept { return beta_; }
  Tensor<T>& running_mean() noexcept { return running_mean_; }
  Tensor<T>& running_var() noexcept { return running_var_; }

 private:
  Config cfg_;
  Param<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  std::vector<T> xhat_, inv_std_;
  bool batch_mode_ = false;
};

/// Inverted dropout: survivors are scaled by 1/(1-P) in training; identity at inference.
template <class T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, std::vector<std::string> inputs, double p)
      : Layer<T>(std::move(name), std::move(inputs)), p_(p) {
    require(p >= 0.0 && p < 1.0, ErrorKind::InvalidParam, this->name_ + ": dropout fraction must lie in [0, 1)");
  }

  LayerKind kind() const override { return LayerKind::Dropout; }
  double rate() const noexcept { return p_; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    return in[0];
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext& ctx) override {
    const auto& x = *in[0];
    out = x;
    active_ = ctx.training && p_ > 0.0;
    if (!active_) return;
    RandomStream rng = make_stream(ctx.seed, "dropout", this->name_, ctx.step);
    mask_.resize(x.size());
    const T keep = static_cast<T>(1.0 / (1.0 - p_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = rng.uniform() < p_ ? T{} : keep;
      out[i] = x[i] * mask_[i];
    }
  }

  void backward(const std::vector<const Tensor<T>*>&, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    *din[0] = dout;
    if (!active_) return;
    for (std::size_t i = 0; i < dout.size(); ++i) (*din[0])[i] *= mask_[i];
  }

  nlohmann::json config() const override { return {{"p", p_}}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  double p_;
  bool active_ = false;
  std::vector<T> mask_;
};

/// y = x W + b with W stored [in x out].
template <class T>
class Dense final : public Layer<T> {
 public:
  struct Config {
    std::size_t in = 1;
    std::size_t out = 1;
    double l2 = 0.0;
  };

  Dense(std::string name, std::vector<std::string> inputs, Config cfg)
      : Layer<T>(std::move(name), std::move(inputs)), cfg_(cfg) {
    require(cfg.in > 0 && cfg.out > 0 && cfg.l2 >= 0.0, ErrorKind::ShapeError, this->name_ + ": invalid dense config");
    weight_ = {"weight", Tensor<T>({cfg.in, cfg.out}), Tensor<T>({cfg.in, cfg.out})};
    bias_ = {"bias", Tensor<T>({cfg.out}), Tensor<T>({cfg.out})};
  }

  LayerKind kind() const override { return LayerKind::Dense; }
  const Config& cfg() const noexcept { return cfg_; }
  double l2() const override { return cfg_.l2; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    require(in[0].size() == 1 && in[0][0] == cfg_.in, ErrorKind::ShapeError,
            this->name_ + ": expects [" + std::to_string(cfg_.in) + "] input, got " + shape_string(in[0]));
    return {cfg_.out};
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const auto& x = *in[0];
    const auto B = static_cast<Eigen::Index>(x.dim(0));
    out.assign_zero({x.dim(0), cfg_.out});
    detail::MapConstMat<T> xm(x.ptr(), B, static_cast<Eigen::Index>(cfg_.in));
    detail::MapConstMat<T> w(weight_.value.ptr(), static_cast<Eigen::Index>(cfg_.in), static_cast<Eigen::Index>(cfg_.out));
    detail::MapMat<T> y(out.ptr(), B, static_cast<Eigen::Index>(cfg_.out));
    y.noalias() = xm * w;
    y.rowwise() += detail::MapConstVec<T>(bias_.value.ptr(), static_cast<Eigen::Index>(cfg_.out)).transpose();
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool param_grads) override {
    const auto& x = *in[0];
    const auto B = static_cast<Eigen::Index>(x.dim(0));
    const auto I = static_cast<Eigen::Index>(cfg_.in), O = static_cast<Eigen::Index>(cfg_.out);
    detail::MapConstMat<T> xm(x.ptr(), B, I);
    detail::MapConstMat<T> dy(dout.ptr(), B, O);
    detail::MapConstMat<T> w(weight_.value.ptr(), I, O);
    if (param_grads) {
      detail::MapMat<T>(weight_.grad.ptr(), I, O).noalias() += xm.transpose() * dy;
      detail::MapVec<T>(bias_.grad.ptr(), O) += dy.colwise().sum().transpose();
    }
    if (din[0]) {
      din[0]->assign_zero(x.shape());
      detail::MapMat<T>(din[0]->ptr(), B, I).noalias() = dy * w.transpose();
    }
  }

  nlohmann::json config() const override { return {{"in", cfg_.in}, {"out", cfg_.out}, {"l2", cfg_.l2}}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  void init(RandomStream& rng) override {
    detail::he_uniform(weight_.value, cfg_.in, rng);
    bias_.value.fill(T{});
  }

  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }

 private:
  Config cfg_;
  Param<T> weight_, bias_;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::ReLU; }
  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    return in[0];
  }
  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    out = *in[0];
    for (auto& v : out.data()) v = v > T{} ? v : T{};
  }
  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    *din[0] = dout;
    const auto& x = *in[0];
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] > T{})) (*din[0])[i] = T{};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }
};

/// Row-wise softmax with max subtraction; total for any finite input.
template <class T>
void softmax_rows(const T* z, T* p, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z + r * cols;
    T* pr = p + r * cols;
    const T mx = *std::max_element(zr, zr + cols);
    T sum{};
    for (std::size_t c = 0; c < cols; ++c) {
      pr[c] = std::exp(zr[c] - mx);
      sum += pr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) pr[c] /= sum;
  }
}

template <class T>
class Softmax final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Softmax; }
  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    this->expect_rank(in[0], 1);
    return in[0];
  }
  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const auto& z = *in[0];
    out.assign_zero(z.shape());
    softmax_rows(z.ptr(), out.ptr(), z.dim(0), z.dim(1));
  }
  void backward(const std::vector<const Tensor<T>*>&, const Tensor<T>& out, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    din[0]->assign_zero(out.shape());
    const std::size_t R = out.dim(0), C = out.dim(1);
    for (std::size_t r = 0; r < R; ++r) {
      T dot{};
      for (std::size_t c = 0; c < C; ++c) dot += out[r * C + c] * dout[r * C + c];
      for (std::size_t c = 0; c < C; ++c) (*din[0])[r * C + c] = out[r * C + c] * (dout[r * C + c] - dot);
    }
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Softmax>(*this); }
};

/// Channel-axis concatenation, inputs in declaration order.
template <class T>
class Concat final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Concat; }

  Shape output_shape(const std::vector<Shape>& in) const override {
    require(!in.empty(), ErrorKind::ShapeError, this->name_ + ": concat needs inputs");
    Shape out = in[0];
    for (std::size_t i = 1; i < in.size(); ++i) {
      require(in[i].size() == out.size() && std::equal(in[i].begin() + 1, in[i].end(), out.begin() + 1),
              ErrorKind::ShapeError,
              this->name_ + ": incompatible concat inputs " + shape_string(in[0]) + " and " + shape_string(in[i]));
      out[0] += in[i][0];
    }
    return out;
  }

  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    const std::size_t B = in[0]->dim(0);
    const std::size_t S = in[0]->size() / (B * in[0]->dim(1));
    std::size_t C = 0;
    for (const auto* t : in) C += t->dim(1);
    Shape s = in[0]->shape();
    s[1] = C;
    out.assign_zero(s);
    for (std::size_t n = 0; n < B; ++n) {
      std::size_t c0 = 0;
      for (const auto* t : in) {
        const std::size_t ci = t->dim(1);
        std::copy_n(t->ptr() + n * ci * S, ci * S, out.ptr() + (n * C + c0) * S);
        c0 += ci;
      }
    }
  }

  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>& out, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    const std::size_t B = out.dim(0), C = out.dim(1), S = out.size() / (B * C);
    std::size_t c0 = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const std::size_t ci = in[i]->dim(1);
      if (din[i]) {
        din[i]->assign_zero(in[i]->shape());
        for (std::size_t n = 0; n < B; ++n)
          std::copy_n(dout.ptr() + (n * C + c0) * S, ci * S, din[i]->ptr() + n * ci * S);
      }
      c0 += ci;
    }
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Concat>(*this); }
};

template <class T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Flatten; }
  Shape output_shape(const std::vector<Shape>& in) const override {
    this->expect_inputs(in, 1);
    return {shape_size(in[0])};
  }
  void forward(const std::vector<const Tensor<T>*>& in, Tensor<T>& out, const ForwardContext&) override {
    out = *in[0];
    out.reshape({in[0]->dim(0), in[0]->size() / in[0]->dim(0)});
  }
  void backward(const std::vector<const Tensor<T>*>& in, const Tensor<T>&, const Tensor<T>& dout,
                const std::vector<Tensor<T>*>& din, bool) override {
    if (!din[0]) return;
    *din[0] = dout;
    din[0]->reshape(in[0]->shape());
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }
};

/// Rebuilds a layer from its serialized kind and config.
template <class T>
std::unique_ptr<Layer<T>> make_layer(LayerKind kind, std::string name, std::vector<std::string> inputs,
                                     const nlohmann::json& cfg) {
  auto get = [&](const char* key) -> const nlohmann::json& {
    require(cfg.contains(key), ErrorKind::ShapeError, name + ": layer config lacks '" + key + "'");
    return cfg.at(key);
  };
  auto sz = [&](const char* key) { return get(key).template get<std::size_t>(); };
  auto real = [&](const char* key) { return get(key).template get<double>(); };
  switch (kind) {
    case LayerKind::Conv2D:
      return std::make_unique<Conv2D<T>>(
          std::move(name), std::move(inputs),
          typename Conv2D<T>::Config{sz("in_channels"), sz("filters"),
                                     sz("kh"), sz("kw"),
                                     sz("stride"), sz("pad")});
    case LayerKind::MaxPool2D:
      return std::make_unique<MaxPool2D<T>>(
          std::move(name), std::move(inputs),
          typename MaxPool2D<T>::Config{sz("k"), sz("stride"),
                                        sz("pad")});
    case LayerKind::GlobalAvgPool: return std::make_unique<GlobalAvgPool<T>>(std::move(name), std::move(inputs));
    case LayerKind::BatchNorm:
      return std::make_unique<BatchNorm<T>>(
          std::move(name), std::move(inputs),
          typename BatchNorm<T>::Config{sz("channels"), real("momentum"),
                                        real("eps")});
    case LayerKind::Dropout:
      return std::make_unique<Dropout<T>>(std::move(name), std::move(inputs), real("p"));
    case LayerKind::Dense:
      return std::make_unique<Dense<T>>(std::move(name), std::move(inputs),
                                        typename Dense<T>::Config{sz("in"),
                                                                  sz("out"),
                                                                  real("l2")});
    case LayerKind::ReLU: return std::make_unique<ReLU<T>>(std::move(name), std::move(inputs));
    case LayerKind::Softmax: return std::make_unique<Softmax<T>>(std::move(name), std::move(inputs));
    case LayerKind::Concat: return std::make_unique<Concat<T>>(std::move(name), std::move(inputs));
    case LayerKind::Flatten: return std::make_unique<Flatten<T>>(std::move(name), std::move(inputs));
  }
  fail(ErrorKind::ShapeError, "unhandled layer kind");
}

}  // namespace vsm::nn
