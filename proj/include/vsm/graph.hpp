// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Layer DAG with one input and one output. Layers are stored in a topological
// order (each layer may only consume earlier layers or the graph input).

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/error.hpp"
#include "vsm/layers.hpp"
#include "vsm/rng.hpp"
#include "vsm/tensor.hpp"

namespace vsm::nn {

inline constexpr const char* kGraphInput = "input";

template <class T>
class Graph {
 public:
  Graph() = default;
  explicit Graph(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  Graph(const Graph& o)
      : input_shape_(o.input_shape_), cut_point_(o.cut_point_), family_(o.family_), num_classes_(o.num_classes_) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
    index_ = o.index_;
  }
  Graph& operator=(const Graph& o) {
    if (this != &o) *this = Graph(o);
    return *this;
  }
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  /// Appends a layer; its inputs must already exist.
  template <class L>
  L& add(std::unique_ptr<L> layer) {
    const std::string name = layer->name();
    require(!name.empty() && name != kGraphInput && !index_.contains(name), ErrorKind::ShapeError,
            "duplicate or reserved layer name '" + name + "'");
    require(!layer->inputs().empty(), ErrorKind::ShapeError, name + ": layer has no inputs");
    for (const auto& in : layer->inputs())
      require(in == kGraphInput || index_.contains(in), ErrorKind::ShapeError,
              name + ": unknown input '" + in + "'");
    L& ref = *layer;
    index_[name] = layers_.size();
    layers_.push_back(std::move(layer));
    return ref;
  }

  template <template <class> class L, class... Args>
  L<T>& emplace(std::string name, std::vector<std::string> inputs, Args&&... args) {
    return add(std::make_unique<L<T>>(std::move(name), std::move(inputs), std::forward<Args>(args)...));
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t size() const noexcept { return layers_.size(); }
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::ShapeError, "no layer named '" + name + "'");
    return it->second;
  }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  Layer<T>& layer(const std::string& name) { return *layers_[index_of(name)]; }
  const Layer<T>& layer(const std::string& name) const { return *layers_[index_of(name)]; }
  const std::string& output_name() const { return layers_.back()->name(); }

  const std::string& cut_point() const noexcept { return cut_point_; }
  void set_cut_point(std::string c) { cut_point_ = std::move(c); }
  const std::string& family() const noexcept { return family_; }
  void set_family(std::string f) { family_ = std::move(f); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  void set_num_classes(std::size_t c) { num_classes_ = c; }

  /// Per-sample output shape of every layer; throws ShapeError on any mismatch.
  std::vector<Shape> shapes() const {
    require(!layers_.empty(), ErrorKind::ShapeError, "empty graph");
    std::vector<Shape> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) {
      std::vector<Shape> in;
      for (const auto& n : l->inputs()) in.push_back(n == kGraphInput ? input_shape_ : out[index_.at(n)]);
      out.push_back(l->output_shape(in));
    }
    return out;
  }

  void validate() const {
    (void)shapes();
    if (!cut_point_.empty()) {
      require(contains(cut_point_), ErrorKind::CutPointError, "cut point '" + cut_point_ + "' is not a layer");
      require(shapes()[index_of(cut_point_)].size() == 3, ErrorKind::CutPointError,
              "cut point '" + cut_point_ + "' does not produce a 4-D feature map");
    }
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
  }

  /// Deterministic initialization: each layer draws from a stream keyed by (seed, layer name).
  void init(std::uint64_t seed) {
    for (auto& l : layers_) {
      RandomStream rng = make_stream(seed, "init", l->name());
      l->init(rng);
    }
  }

  void set_all_trainable(bool t) {
    for (auto& l : layers_) l->set_trainable(t);
  }

  /// Runs layers [0, last] on a batch [B x input_shape]. Returns the output of `last`.
  const Tensor<T>& forward(const Tensor<T>& x, const ForwardContext& ctx, std::size_t last) {
    require(x.rank() == input_shape_.size() + 1 && std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1),
            ErrorKind::ShapeError, "graph expects [B x " + shape_string(input_shape_) + "], got " + shape_string(x.shape()));
    input_ = &x;
    acts_.resize(layers_.size());
    for (std::size_t i = 0; i <= last; ++i) {
      const auto ins = gather_inputs(i);
      layers_[i]->forward(ins, acts_[i], ctx);
    }
    forwarded_ = last + 1;
    return acts_[last];
  }
  const Tensor<T>& forward(const Tensor<T>& x, const ForwardContext& ctx = {}) {
    return forward(x, ctx, layers_.size() - 1);
  }
  const Tensor<T>& forward_to(const Tensor<T>& x, const std::string& name, const ForwardContext& ctx = {}) {
    return forward(x, ctx, index_of(name));
  }

  const Tensor<T>& activation(std::size_t i) const { return acts_.at(i); }
  const Tensor<T>& activation(const std::string& name) const { return acts_.at(index_of(name)); }

  void zero_grad() {
    for (auto& l : layers_)
      for (auto* p : l->params()) p->grad.assign_zero(p->value.shape());
  }

  /// Backpropagates `dout` (gradient of the loss w.r.t. the output of layer
  /// `from`) through layers [0, from]. Parameter gradients are accumulated only
  /// for trainable layers; activation gradients still flow through frozen ones.
  void backward(std::size_t from, const Tensor<T>& dout) {
    require(from < forwarded_, ErrorKind::ShapeError, "backward before forward");
    const auto need = needs_grad();
    grads_.assign(layers_.size(), Tensor<T>());
    std::vector<bool> has(layers_.size(), false);
    grads_[from] = dout;
    has[from] = true;
    std::vector<Tensor<T>> scratch;
    for (std::size_t k = from + 1; k-- > 0;) {
      if (!has[k] || !need[k]) continue;
      auto& l = *layers_[k];
      const auto ins = gather_inputs(k);
      scratch.assign(ins.size(), Tensor<T>());
      std::vector<Tensor<T>*> din(ins.size(), nullptr);
      for (std::size_t j = 0; j < ins.size(); ++j) {
        const auto& n = l.inputs()[j];
        if (n != kGraphInput && need[index_.at(n)]) din[j] = &scratch[j];
      }
      const bool pg = l.trainable() && !l.params().empty();
      l.backward(ins, acts_[k], grads_[k], din, pg);
      if (pg)
        for (const auto* p : l.params())
          require(p->grad.all_finite(), ErrorKind::NumericalError, "non-finite gradient in layer '" + l.name() + "'");
      for (std::size_t j = 0; j < ins.size(); ++j) {
        if (!din[j]) continue;
        require(scratch[j].all_finite(), ErrorKind::NumericalError,
                "non-finite gradient flowing out of layer '" + l.name() + "'");
        const std::size_t src = index_.at(l.inputs()[j]);
        if (!has[src]) {
          grads_[src] = std::move(scratch[j]);
          has[src] = true;
        } else {
          auto& g = grads_[src].data();
          const auto& d = scratch[j].data();
          for (std::size_t e = 0; e < g.size(); ++e) g[e] += d[e];
        }
      }
      grads_[k] = Tensor<T>();
    }
  }

  /// Layers whose output gradient is needed: those with a trainable
  /// parameterized layer at or upstream of them.
  std::vector<bool> needs_grad() const {
    std::vector<bool> need(layers_.size(), false);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = *layers_[i];
      bool n = l.trainable() && !l.params().empty();
      for (const auto& in : l.inputs())
        if (in != kGraphInput && need[index_.at(in)]) n = true;
      need[i] = n;
    }
    return need;
  }

  /// Every persistent tensor as ("layer/param", tensor), in layer order.
  std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.emplace_back(l->name() + "/" + p->name, &p->value);
      for (auto& [n, t] : l->buffers()) out.emplace_back(l->name() + "/" + n, t);
    }
    return out;
  }
  std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const {
    auto v = const_cast<Graph*>(this)->named_tensors();
    return {v.begin(), v.end()};
  }

  std::vector<Tensor<T>> state() const {
    std::vector<Tensor<T>> s;
    for (const auto& [_, t] : named_tensors()) s.push_back(*t);
    return s;
  }
  void load_state(const std::vector<Tensor<T>>& s) {
    auto named = named_tensors();
    require(s.size() == named.size(), ErrorKind::ShapeError, "state size mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(s[i].shape() == named[i].second->shape(), ErrorKind::ShapeError, "state shape mismatch at " + named[i].first);
      *named[i].second = s[i];
    }
  }

  nlohmann::ordered_json descriptor() const {
    nlohmann::ordered_json d;
    d["input_shape"] = input_shape_;
    d["family"] = family_;
    d["num_classes"] = num_classes_;
    d["cut_point"] = cut_point_;
    auto& ls = d["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : layers_) {
      nlohmann::ordered_json j;
      j["name"] = l->name();
      j["kind"] = std::string(to_string(l->kind()));
      j["inputs"] = l->inputs();
      j["trainable"] = l->trainable();
      j["config"] = l->config();
      ls.push_back(std::move(j));
    }
    return d;
  }

  static Graph from_descriptor(const nlohmann::json& d) {
    try {
      Graph g(d.at("input_shape").get<Shape>());
      g.family_ = d.at("family").get<std::string>();
      g.num_classes_ = d.at("num_classes").get<std::size_t>();
      g.cut_point_ = d.at("cut_point").get<std::string>();
      for (const auto& j : d.at("layers")) {
        auto l = make_layer<T>(layer_kind_from_string(j.at("kind").get<std::string>()), j.at("name").get<std::string>(),
                               j.at("inputs").get<std::vector<std::string>>(), j.at("config"));
        l->set_trainable(j.at("trainable").get<bool>());
        g.add(std::move(l));
      }
      g.validate();
      return g;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ShapeError, std::string("malformed graph descriptor: ") + e.what());
    }
  }

  /// Same graph and state in another scalar type.
  template <class U>
  Graph<U> cast() const {
    Graph<U> g = Graph<U>::from_descriptor(descriptor());
    auto dst = g.named_tensors();
    const auto src = named_tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    return g;
  }

 private:
  std::vector<const Tensor<T>*> gather_inputs(std::size_t i) const {
    std::vector<const Tensor<T>*> ins;
    for (const auto& n : layers_[i]->inputs()) ins.push_back(n == kGraphInput ? input_ : &acts_[index_.at(n)]);
    return ins;
  }

  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::map<std::string, std::size_t> index_;
  std::string cut_point_;
  std::string family_;
  std::size_t num_classes_ = 0;

  const Tensor<T>* input_ = nullptr;
  std::vector<Tensor<T>> acts_;
  std::vector<Tensor<T>> grads_;
  std::size_t forwarded_ = 0;
};

}  // namespace vsm::nn
