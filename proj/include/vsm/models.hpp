// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Miniature members of three CNN families: stacked small kernels (mini-vgg),
// parallel multi-scale branches (mini-inception) and concatenative dense
// connectivity (mini-dense). Each declares the sixth serialized layer as its
// transfer cut point.

#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vsm/error.hpp"
#include "vsm/graph.hpp"
#include "vsm/layers.hpp"

namespace vsm::nn {

inline constexpr std::size_t kCutIndex = 6;  // 1-based position of the cut layer
inline constexpr std::size_t kMinSpatial = 32;

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"mini-vgg", "mini-inception", "mini-dense"};
  return names;
}

namespace detail {

inline void check_input(const Shape& in, std::size_t num_classes) {
  require(in.size() == 3 && in[0] >= 1, ErrorKind::ShapeError, "model input must be [C x H x W], got " + shape_string(in));
  require(in[1] >= kMinSpatial && in[2] >= kMinSpatial, ErrorKind::ShapeError,
          "spatial dims must be >= " + std::to_string(kMinSpatial) + ", got " + shape_string(in));
  require(num_classes >= 2, ErrorKind::ShapeError, "num_classes must be >= 2");
}

template <class T>
typename Conv2D<T>::Config conv(std::size_t in, std::size_t out, std::size_t k) {
  return {in, out, k, k, 1, k / 2};
}

template <class T>
void finish(Graph<T>& g, const std::string& from, std::size_t channels, std::size_t num_classes, std::string family) {
  g.template emplace<GlobalAvgPool>("gap", {from});
  g.template emplace<Dense>("fc", {"gap"}, typename Dense<T>::Config{channels, num_classes, 0.0});
  g.template emplace<Softmax>("softmax", {"fc"});
  g.set_num_classes(num_classes);
  g.set_family(std::move(family));
  g.set_cut_point(g.layer(kCutIndex - 1).name());
  g.validate();
}

}  // namespace detail

template <class T = float>
Graph<T> build_mini_vgg(const Shape& input_shape, std::size_t num_classes) {
  detail::check_input(input_shape, num_classes);
  Graph<T> g(input_shape);
  const std::size_t c = input_shape[0];
  g.template emplace<Conv2D>("conv1_1", {kGraphInput}, detail::conv<T>(c, 16, 3));
  g.template emplace<ReLU>("relu1_1", {"conv1_1"});
  g.template emplace<Conv2D>("conv1_2", {"relu1_1"}, detail::conv<T>(16, 16, 3));
  g.template emplace<ReLU>("relu1_2", {"conv1_2"});
  g.template emplace<MaxPool2D>("pool1", {"relu1_2"}, typename MaxPool2D<T>::Config{2, 2, 0});
  g.template emplace<Conv2D>("conv2_1", {"pool1"}, detail::conv<T>(16, 32, 3));
  g.template emplace<ReLU>("relu2_1", {"conv2_1"});
  g.template emplace<Conv2D>("conv2_2", {"relu2_1"}, detail::conv<T>(32, 32, 3));
  g.template emplace<ReLU>("relu2_2", {"conv2_2"});
  g.template emplace<MaxPool2D>("pool2", {"relu2_2"}, typename MaxPool2D<T>::Config{2, 2, 0});
  detail::finish(g, "pool2", 32, num_classes, "SpatialExploitation");
  return g;
}

/// Appends one inception block named `p` reading `in` (with `cin` channels).
/// Concat order: 1x1, 1x1->3x3, 1x1->5x5, pool->1x1; 32 channels out.
template <class T>
std::string add_inception_block(Graph<T>& g, const std::string& p, const std::string& in, std::size_t cin) {
  g.template emplace<Conv2D>(p + "_b1_conv1x1", {in}, detail::conv<T>(cin, 8, 1));
  g.template emplace<Conv2D>(p + "_b2_conv1x1", {in}, detail::conv<T>(cin, 8, 1));
  g.template emplace<Conv2D>(p + "_b2_conv3x3", {p + "_b2_conv1x1"}, detail::conv<T>(8, 8, 3));
  g.template emplace<Conv2D>(p + "_b3_conv1x1", {in}, detail::conv<T>(cin, 8, 1));
  g.template emplace<Conv2D>(p + "_b3_conv5x5", {p + "_b3_conv1x1"}, detail::conv<T>(8, 8, 5));
  g.template emplace<MaxPool2D>(p + "_b4_pool", {in}, typename MaxPool2D<T>::Config{3, 1, 1});
  g.template emplace<Conv2D>(p + "_b4_conv1x1", {p + "_b4_pool"}, detail::conv<T>(cin, 8, 1));
  g.template emplace<Concat>(p + "_concat",
                             {p + "_b1_conv1x1", p + "_b2_conv3x3", p + "_b3_conv5x5", p + "_b4_conv1x1"});
  g.template emplace<ReLU>(p + "_relu", {p + "_concat"});
  return p + "_relu";
}

template <class T = float>
Graph<T> build_mini_inception(const Shape& input_shape, std::size_t num_classes) {
  detail::check_input(input_shape, num_classes);
  Graph<T> g(input_shape);
  g.template emplace<Conv2D>("stem_conv", {kGraphInput}, detail::conv<T>(input_shape[0], 16, 3));
  g.template emplace<ReLU>("stem_relu", {"stem_conv"});
  g.template emplace<MaxPool2D>("stem_pool", {"stem_relu"}, typename MaxPool2D<T>::Config{2, 2, 0});
  const auto a = add_inception_block(g, "a", "stem_pool", 16);
  const auto b = add_inception_block(g, "b", a, 32);
  detail::finish(g, b, 32, num_classes, "DepthMultiScale");
  return g;
}

/// Appends a dense block of `layers` BN-ReLU-Conv3x3(growth) layers. Layer j
/// reads the channel concatenation of the block input and all earlier layer
/// outputs. Returns the block output (a concat) and its channel count.
template <class T>
std::pair<std::string, std::size_t> add_dense_block(Graph<T>& g, const std::string& p, const std::string& in,
                                                    std::size_t cin, std::size_t layers, std::size_t growth) {
  std::vector<std::string> feats = {in};
  std::size_t ch = cin;
  for (std::size_t j = 1; j <= layers; ++j) {
    const std::string l = p + "_l" + std::to_string(j);
    std::string src = in;
    if (feats.size() > 1) {
      src = l + "_in";
      g.template emplace<Concat>(src, feats);
    }
    g.template emplace<BatchNorm>(l + "_bn", {src}, typename BatchNorm<T>::Config{ch, 0.9, 1e-5});
    g.template emplace<ReLU>(l + "_relu", {l + "_bn"});
    g.template emplace<Conv2D>(l + "_conv", {l + "_relu"}, detail::conv<T>(ch, growth, 3));
    feats.push_back(l + "_conv");
    ch += growth;
  }
  g.template emplace<Concat>(p + "_out", feats);
  return {p + "_out", ch};
}

template <class T = float>
Graph<T> build_mini_dense(const Shape& input_shape, std::size_t num_classes) {
  detail::check_input(input_shape, num_classes);
  Graph<T> g(input_shape);
  g.template emplace<Conv2D>("stem_conv", {kGraphInput}, detail::conv<T>(input_shape[0], 16, 3));
  g.template emplace<ReLU>("stem_relu", {"stem_conv"});
  g.template emplace<MaxPool2D>("stem_pool", {"stem_relu"}, typename MaxPool2D<T>::Config{2, 2, 0});
  const auto [d1, c1] = add_dense_block(g, "d1", "stem_pool", 16, 4, 8);
  g.template emplace<Conv2D>("t1_conv", {d1}, detail::conv<T>(c1, c1 / 2, 1));
  g.template emplace<MaxPool2D>("t1_pool", {"t1_conv"}, typename MaxPool2D<T>::Config{2, 2, 0});
  const auto [d2, c2] = add_dense_block(g, "d2", "t1_pool", c1 / 2, 4, 8);
  detail::finish(g, d2, c2, num_classes, "MultiPathDense");
  return g;
}

template <class T = float>
Graph<T> build_model(const std::string& name, const Shape& input_shape, std::size_t num_classes) {
  if (name == "mini-vgg") return build_mini_vgg<T>(input_shape, num_classes);
  if (name == "mini-inception") return build_mini_inception<T>(input_shape, num_classes);
  if (name == "mini-dense") return build_mini_dense<T>(input_shape, num_classes);
  fail(ErrorKind::ConfigError, "unknown model '" + name + "'");
}

/// Number of layers before the classifier (the last Dense layer).
template <class T>
std::size_t backbone_layer_count(const Graph<T>& g) {
  for (std::size_t i = g.size(); i-- > 0;)
    if (g.layer(i).kind() == LayerKind::Dense) return i;
  return g.size();
}

/// Machine-readable summary: layers, output shapes, parameter counts, cut point.
template <class T>
nlohmann::ordered_json describe_json(const Graph<T>& g) {
  const auto shapes = g.shapes();
  nlohmann::ordered_json j;
  j["family"] = g.family();
  j["input_shape"] = g.input_shape();
  j["num_classes"] = g.num_classes();
  j["cut_point"] = g.cut_point();
  j["backbone_layers"] = backbone_layer_count(g);
  j["total_params"] = g.param_count();
  auto& ls = j["layers"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& l = g.layer(i);
    ls.push_back({{"index", i + 1},
                  {"name", l.name()},
                  {"kind", std::string(to_string(l.kind()))},
                  {"inputs", l.inputs()},
                  {"output_shape", shapes[i]},
                  {"params", l.param_count()},
                  {"trainable", l.trainable()}});
  }
  return j;
}

template <class T>
std::string describe(const Graph<T>& g) {
  const auto shapes = g.shapes();
  const std::size_t backbone = backbone_layer_count(g);
  std::ostringstream os;
  os << "family: " << g.family() << "\ninput: " << shape_string(g.input_shape()) << "\n";
  os << std::left << std::setw(5) << "#" << std::setw(22) << "layer" << std::setw(15) << "kind" << std::setw(16)
     << "output" << std::setw(9) << "params" << "notes\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& l = g.layer(i);
    std::string notes;
    if (i >= backbone) notes += "head ";
    if (!l.trainable()) notes += "frozen ";
    if (l.name() == g.cut_point()) notes += "cut ";
    os << std::setw(5) << i + 1 << std::setw(22) << l.name() << std::setw(15) << to_string(l.kind()) << std::setw(16)
       << shape_string(shapes[i]) << std::setw(9) << l.param_count() << notes << "\n";
  }
  os << "backbone layers: " << backbone << "\ncut point: " << g.cut_point() << "\ntotal params: " << g.param_count()
     << "\n";
  return os.str();
}

}  // namespace vsm::nn
