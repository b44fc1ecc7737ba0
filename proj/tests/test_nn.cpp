// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"

namespace vsm::nn {
namespace {

using oracle::random_tensor;

ForwardContext training(std::uint64_t step = 0) { return {true, 42, step}; }

void fill_params(Layer<double>& l, RandomStream& rng) {
  for (auto* p : l.params())
    for (auto& v : p->value.data()) v = rng.uniform(-0.8, 0.8);
}

TEST(Conv2D, MatchesNestedLoopOracle) {
  RandomStream rng = make_stream(1, "conv");
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t B = 1 + rng.uniform_int(0, 2), C = 1 + rng.uniform_int(0, 3), F = 1 + rng.uniform_int(0, 3);
    const std::size_t k = 1 + rng.uniform_int(0, 2), stride = 1 + rng.uniform_int(0, 1), pad = rng.uniform_int(0, 1);
    const std::size_t H = k + rng.uniform_int(0, 5), W = k + rng.uniform_int(0, 5);
    Conv2D<double> conv("c", {"input"}, {C, F, k, k, stride, pad});
    fill_params(conv, rng);
    const auto x = random_tensor({B, C, H, W}, rng);
    Tensor<double> y;
    conv.forward({&x}, y, {});
    std::size_t Ho, Wo;
    const auto want = oracle::conv2d(x.data(), B, C, H, W, conv.params()[0]->value.data(), conv.params()[1]->value.data(),
                                     F, k, k, stride, pad, Ho, Wo);
    ASSERT_EQ(y.shape(), (Shape{B, F, Ho, Wo}));
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  }
}

TEST(Conv2D, SpecExampleAndFloatPath) {
  RandomStream rng = make_stream(2, "conv");
  Conv2D<float> conv("c", {"input"}, {2, 3, 3, 3, 1, 0});
  for (auto* p : conv.params())
    for (auto& v : p->value.data()) v = static_cast<float>(rng.uniform(-1, 1));
  const auto x = random_tensor<float>({1, 2, 5, 5}, rng);
  Tensor<float> y;
  conv.forward({&x}, y, {});
  std::vector<double> xd(x.data().begin(), x.data().end());
  std::vector<double> wd(conv.params()[0]->value.data().begin(), conv.params()[0]->value.data().end());
  std::vector<double> bd(conv.params()[1]->value.data().begin(), conv.params()[1]->value.data().end());
  std::size_t Ho, Wo;
  const auto want = oracle::conv2d(xd, 1, 2, 5, 5, wd, bd, 3, 3, 3, 1, 0, Ho, Wo);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-6);
}

TEST(MaxPool2D, MatchesOracleAndRoutesGradientToArgmax) {
  RandomStream rng = make_stream(3, "pool");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.uniform_int(0, 1), stride = 1 + rng.uniform_int(0, 1), pad = rng.uniform_int(0, 1);
    const std::size_t B = 2, C = 2, H = k + rng.uniform_int(0, 4), W = k + rng.uniform_int(0, 4);
    MaxPool2D<double> pool("p", {"input"}, {k, stride, pad});
    const auto x = random_tensor({B, C, H, W}, rng);
    Tensor<double> y;
    pool.forward({&x}, y, {});
    std::size_t Ho, Wo;
    const auto want = oracle::maxpool(x.data(), B, C, H, W, k, stride, pad, Ho, Wo);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(y[i], want[i]);
  }
  MaxPool2D<double> pool("p", {"input"}, {2, 2, 0});
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 4, 2, 3});
  Tensor<double> y, dx({1, 1, 2, 2});
  pool.forward({&x}, y, {});
  pool.backward({&x}, y, Tensor<double>({1, 1, 1, 1}, std::vector<double>{5}), {&dx}, true);
  EXPECT_EQ(dx.data(), (std::vector<double>{0, 5, 0, 0}));
}

TEST(Dense, MatchesOracle) {
  RandomStream rng = make_stream(4, "dense");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 1 + rng.uniform_int(0, 4), in = 1 + rng.uniform_int(0, 9), out = 1 + rng.uniform_int(0, 6);
    Dense<double> d("d", {"input"}, {in, out, 0.0});
    fill_params(d, rng);
    const auto x = random_tensor({B, in}, rng);
    Tensor<double> y;
    d.forward({&x}, y, {});
    const auto want = oracle::dense(x.data(), B, in, d.params()[0]->value.data(), d.params()[1]->value.data(), out);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  }
}

TEST(GlobalAvgPool, MeansAndGradient) {
  GlobalAvgPool<double> gap("g", {"input"});
  Tensor<double> x({1, 2, 1, 2}, std::vector<double>{1, 3, 10, 20});
  Tensor<double> y, dx({1, 2, 1, 2});
  gap.forward({&x}, y, {});
  EXPECT_EQ(y.data(), (std::vector<double>{2, 15}));
  gap.backward({&x}, y, Tensor<double>({1, 2}, std::vector<double>{2, 4}), {&dx}, true);
  EXPECT_EQ(dx.data(), (std::vector<double>{1, 1, 2, 2}));
}

TEST(Softmax, RowsSumToOneForExtremeInputs) {
  RandomStream rng = make_stream(5, "softmax");
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_tensor({4, 5}, rng, -1000.0, 1000.0);
    std::vector<double> p(z.size());
    softmax_rows(z.ptr(), p.data(), 4, 5);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        ASSERT_TRUE(std::isfinite(p[r * 5 + c]));
        s += p[r * 5 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Gradients, EveryLayerKindMatchesFiniteDifferences) {
  RandomStream rng = make_stream(6, "grad");
  auto expect_ok = [](const oracle::GradCheck& r, const char* what) {
    EXPECT_LT(r.max_rel, 1e-4) << what << ": " << r.worst;
    EXPECT_GT(r.checked, 0u);
  };
  {
    Conv2D<double> l("conv", {"input"}, {2, 3, 3, 3, 1, 1});
    fill_params(l, rng);
    expect_ok(oracle::check_layer_gradients(l, {random_tensor({2, 2, 5, 4}, rng)}, {}, 100, 1), "conv");
    Conv2D<double> s("conv_s2", {"input"}, {2, 2, 3, 3, 2, 1});
    fill_params(s, rng);
    expect_ok(oracle::check_layer_gradients(s, {random_tensor({2, 2, 6, 5}, rng)}, {}, 100, 2), "strided conv");
    Conv2D<double> pw("conv_1x1", {"input"}, {3, 2, 1, 1, 1, 0});
    fill_params(pw, rng);
    expect_ok(oracle::check_layer_gradients(pw, {random_tensor({2, 3, 3, 3}, rng)}, {}, 100, 3), "pointwise conv");
  }
  {
    Dense<double> l("dense", {"input"}, {6, 4, 0.0});
    fill_params(l, rng);
    expect_ok(oracle::check_layer_gradients(l, {random_tensor({3, 6}, rng)}, {}, 100, 4), "dense");
  }
  {
    BatchNorm<double> l("bn", {"input"}, {3, 0.9, 1e-5});
    fill_params(l, rng);
    expect_ok(oracle::check_layer_gradients(l, {random_tensor({4, 3, 2, 2}, rng)}, training(), 100, 5), "bn 4d");
    BatchNorm<double> f("bn_flat", {"input"}, {5, 0.9, 1e-5});
    fill_params(f, rng);
    expect_ok(oracle::check_layer_gradients(f, {random_tensor({6, 5}, rng)}, training(), 100, 6), "bn 2d");
    BatchNorm<double> inf("bn_inf", {"input"}, {3, 0.9, 1e-5});
    fill_params(inf, rng);
    expect_ok(oracle::check_layer_gradients(inf, {random_tensor({2, 3, 2, 2}, rng)}, {}, 100, 7), "bn inference");
  }
  {
    MaxPool2D<double> l("pool", {"input"}, {2, 2, 0});
    expect_ok(oracle::check_layer_gradients(l, {random_tensor({2, 2, 6, 6}, rng)}, {}, 100, 8), "maxpool");
    MaxPool2D<double> o("pool_pad", {"input"}, {3, 1, 1});
    expect_ok(oracle::check_layer_gradients(o, {random_tensor({1, 2, 5, 5}, rng)}, {}, 100, 9), "overlapping pool");
    GlobalAvgPool<double> g("gap", {"input"});
    expect_ok(oracle::check_layer_gradients(g, {random_tensor({2, 3, 3, 3}, rng)}, {}, 100, 10), "gap");
  }
  {
    ReLU<double> r("relu", {"input"});
    expect_ok(oracle::check_layer_gradients(r, {random_tensor({2, 30}, rng)}, {}, 60, 11), "relu");
    Softmax<double> s("softmax", {"input"});
    expect_ok(oracle::check_layer_gradients(s, {random_tensor({3, 4}, rng)}, {}, 12, 12), "softmax");
    Dropout<double> d("drop", {"input"}, 0.3);
    expect_ok(oracle::check_layer_gradients(d, {random_tensor({4, 10}, rng)}, training(3), 40, 13), "dropout");
    Concat<double> c("cat", {"a", "b"});
    expect_ok(oracle::check_layer_gradients(c, {random_tensor({2, 2, 2, 2}, rng), random_tensor({2, 3, 2, 2}, rng)}, {},
                                            40, 14),
              "concat");
    Flatten<double> f("flat", {"input"});
    expect_ok(oracle::check_layer_gradients(f, {random_tensor({2, 2, 2, 3}, rng)}, {}, 24, 15), "flatten");
  }
}

TEST(Gradients, FusedSoftmaxCrossEntropyComposite) {
  Graph<double> g({6});
  g.emplace<Dense>("fc", {kGraphInput}, Dense<double>::Config{6, 4, 0.01});
  g.emplace<Softmax>("softmax", {"fc"});
  g.init(3);
  RandomStream rng = make_stream(7, "ce");
  const auto x = random_tensor({5, 6}, rng);
  const std::vector<int> y = {0, 3, 1, 1, 2};
  const auto r = oracle::check_graph_gradients(g, x, y, 100, 8);
  EXPECT_LT(r.max_rel, 1e-4) << r.worst;

  // Closed form at the logits: (softmax(z) - onehot) / B.
  Graph<double> id({3});
  id.emplace<Dense>("fc", {kGraphInput}, Dense<double>::Config{3, 3, 0.0});
  id.emplace<Softmax>("softmax", {"fc"});
  auto& w = id.layer("fc").params()[0]->value;
  w.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  const auto z = random_tensor({2, 3}, rng);
  loss_and_backward(id, z, {2, 0}, {});
  std::vector<double> p(6);
  softmax_rows(z.ptr(), p.data(), 2, 3);
  p[2] -= 1;
  p[3] -= 1;
  const auto& db = id.layer("fc").params()[1]->grad;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(db[c], (p[c] + p[3 + c]) / 2.0, 1e-14);
}

TEST(Gradients, MicroNetworksOfEveryFamily) {
  for (const auto& name : model_names()) {
    auto g = build_model<double>(name, {1, 32, 32}, 2);
    g.init(5);
    RandomStream rng = make_stream(8, name);
    const auto x = random_tensor({3, 1, 32, 32}, rng, 0.0, 1.0);
    // Whole networks have many ReLU/max kinks; a smaller step keeps the probe off them.
    const auto r = oracle::check_graph_gradients(g, x, {0, 1, 1}, 100, 9, 1e-6);
    EXPECT_LT(r.max_rel, 1e-4) << name << ": " << r.worst;
  }
}

TEST(BatchNorm, TrainingStatisticsAndRunningUpdate) {
  BatchNorm<double> bn("bn", {"input"}, {2, 0.9, 1e-5});
  Tensor<double> x({4, 2}, std::vector<double>{1, 10, 2, 20, 3, 30, 4, 40});
  Tensor<double> y;
  bn.forward({&x}, y, training());
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n) m += y.at(n, c) / 4;
    for (std::size_t n = 0; n < 4; ++n) v += (y.at(n, c) - m) * (y.at(n, c) - m) / 4;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
  const auto bufs = bn.buffers();
  EXPECT_NEAR((*bufs[0].second)[0], 0.1 * 2.5, 1e-12);         // running mean
  EXPECT_NEAR((*bufs[1].second)[0], 0.9 + 0.1 * 1.25, 1e-12);  // running var (biased)

  Tensor<double> one({1, 2}, std::vector<double>{1, 2});
  EXPECT_ERROR_KIND(bn.forward({&one}, y, training()), ErrorKind::BatchTooSmall);
  bn.set_trainable(false);
  bn.forward({&one}, y, training());  // frozen batch norm runs in inference mode
  EXPECT_NEAR(y[0], (1 - 0.25) / std::sqrt(1.025 + 1e-5), 1e-12);
}

TEST(Dropout, InvertedScalingAndKeepRate) {
  Dropout<double> d("drop", {"input"}, 0.5);
  Tensor<double> x({1, 100000}, 1.0), y;
  d.forward({&x}, y, training(1));
  double mean = 0;
  std::size_t kept = 0;
  for (double v : y.data()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
    mean += v / 100000.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 100000.0, 0.5, 0.01);
  EXPECT_NEAR(mean, 1.0, 0.02);
  Tensor<double> again;
  d.forward({&x}, again, training(1));
  EXPECT_EQ(again.data(), y.data());
  d.forward({&x}, again, training(2));
  EXPECT_NE(again.data(), y.data());
  d.forward({&x}, again, {});
  EXPECT_EQ(again.data(), x.data());
  EXPECT_ERROR_KIND(Dropout<double>("bad", {"input"}, 1.0), ErrorKind::InvalidParam);
}

TEST(Loss, CrossEntropyValuesAndErrors) {
  Tensor<double> p({2, 2}, std::vector<double>{0.25, 0.75, 1.0, 0.0});
  EXPECT_NEAR(cross_entropy(p, std::vector<int>{1, 0}), -std::log(0.75) / 2, 1e-15);
  EXPECT_NEAR(cross_entropy(p, std::vector<int>{1, 1}), (-std::log(0.75) - std::log(kProbFloor)) / 2, 1e-12);
  EXPECT_ERROR_KIND(cross_entropy(p, std::vector<int>{1}), ErrorKind::LabelError);
  EXPECT_ERROR_KIND(cross_entropy(p, std::vector<int>{0, 2}), ErrorKind::LabelError);
  Tensor<double> onehot({2, 2}, std::vector<double>{0, 1, 1, 0});
  EXPECT_EQ(cross_entropy(p, onehot), cross_entropy(p, std::vector<int>{1, 0}));
  EXPECT_EQ(argmax_row(Tensor<double>({1, 2}, std::vector<double>{0.5, 0.5}), 0), 0u);
}

TEST(Graph, BackwardAccumulatesAcrossConsumers) {
  // y = softmax(fc(concat(relu(x), relu(x)))): the shared input gradient is the sum of both paths.
  Graph<double> g({3, 1, 1});
  g.emplace<ReLU>("r", {kGraphInput});
  g.emplace<Concat>("cat", {"r", "r"});
  g.emplace<Flatten>("flat", {"cat"});
  g.emplace<Dense>("fc", {"flat"}, Dense<double>::Config{6, 2, 0.0});
  g.emplace<Softmax>("softmax", {"fc"});
  g.init(1);
  RandomStream rng = make_stream(10, "acc");
  const auto x = random_tensor({2, 3, 1, 1}, rng, 0.1, 1.0);
  const auto r = oracle::check_graph_gradients(g, x, {0, 1}, 100, 2);
  EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(Graph, NonFiniteGradientNamesLayer) {
  Graph<double> g({2});
  g.emplace<Dense>("fc", {kGraphInput}, Dense<double>::Config{2, 2, 0.0});
  g.emplace<Softmax>("softmax", {"fc"});
  g.init(0);
  Tensor<double> x({2, 2}, std::vector<double>{1, 2, 3, 4});
  g.forward(x, {});
  Tensor<double> bad({2, 2}, std::vector<double>{NAN, 0, 0, 0});
  try {
    g.backward(g.index_of("fc"), bad);
    FAIL() << "expected NumericalError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalError);
    EXPECT_NE(std::string(e.what()).find("fc"), std::string::npos);
  }
}

TEST(Graph, RejectsBadWiring) {
  Graph<float> g({1, 4, 4});
  EXPECT_ERROR_KIND(g.emplace<ReLU>("r", {"missing"}), ErrorKind::ShapeError);
  g.emplace<ReLU>("r", {kGraphInput});
  EXPECT_ERROR_KIND(g.emplace<ReLU>("r", {kGraphInput}), ErrorKind::ShapeError);
  g.emplace<Dense>("fc", {"r"}, Dense<float>::Config{3, 2, 0.0});
  EXPECT_ERROR_KIND(g.shapes(), ErrorKind::ShapeError);
}

TEST(Adam, FirstStepAndTrace) {
  AdamHyper h;
  std::vector<double> theta = {0.3}, grad = {1.0}, m = {0}, v = {0};
  adam_update<double>(theta, grad, m, v, 1, h);
  EXPECT_NEAR(theta[0] - 0.3, -h.alpha / (1 + h.epsilon), 1e-12);

  const std::vector<double> gs = {0.5, -2.0, 0.25};
  const auto want = oracle::adam_trace(1.0, gs, 0.01, 0.9, 0.999, 1e-7);
  std::vector<double> t = {1.0}, mm = {0}, vv = {0};
  for (std::size_t k = 0; k < gs.size(); ++k) {
    adam_update<double>(t, std::vector<double>{gs[k]}, mm, vv, k + 1, AdamHyper{0.01, 0.9, 0.999, 1e-7});
    EXPECT_NEAR(t[0], want[k], 1e-12);
  }
}

TEST(Adam, OnlyTrainableLayersGetMoments) {
  Graph<float> g({4});
  g.emplace<Dense>("a", {kGraphInput}, Dense<float>::Config{4, 3, 0.0});
  g.emplace<Dense>("b", {"a"}, Dense<float>::Config{3, 2, 0.0});
  g.emplace<Softmax>("softmax", {"b"});
  g.init(0);
  g.layer("a").set_trainable(false);
  const auto before = g.layer("a").params()[0]->value.data();
  loss_and_backward(g, Tensor<float>({2, 4}, 0.5f), {0, 1}, {});
  AdamState<float> opt;
  const auto updated = opt.step(g);
  EXPECT_EQ(updated, (std::vector<std::string>{"b/weight", "b/bias"}));
  EXPECT_FALSE(opt.has_moments("a/weight"));
  EXPECT_EQ(g.layer("a").params()[0]->value.data(), before);
}

TEST(L2, PenaltyAndGradientOnDenseWeightsOnly) {
  Graph<double> g({2});
  g.emplace<Dense>("fc", {kGraphInput}, Dense<double>::Config{2, 2, 0.5});
  g.emplace<Softmax>("softmax", {"fc"});
  auto& w = g.layer("fc").params()[0]->value;
  w.data() = {1, 2, 3, 4};
  g.layer("fc").params()[1]->value.data() = {10, 10};
  EXPECT_DOUBLE_EQ(l2_penalty(g), 0.5 * 30);
  g.layer("fc").set_trainable(false);
  g.zero_grad();
  add_l2_grad(g);
  for (double v : g.layer("fc").params()[0]->grad.data()) EXPECT_EQ(v, 0.0);
}

// Scripted callback schedules with hand-computed expectations.
TEST(Callbacks, ImprovementOnlyAtEpochOne) {
  TrainConfig cfg;
  CallbackController cb(cfg);
  double alpha = cfg.adam.alpha;
  std::vector<int> reductions;
  int stopped = 0;
  for (int e = 1; e <= 50 && !stopped; ++e) {
    const auto d = cb.on_epoch_end(e == 1 ? 1.0 : 2.0, 0.5, alpha);
    EXPECT_EQ(d.checkpoint, e == 1);
    if (d.lr_reduced) reductions.push_back(e);
    alpha = d.alpha;
    if (d.stop) stopped = e;
  }
  EXPECT_EQ(stopped, 11);
  EXPECT_EQ(reductions, (std::vector<int>{6, 11}));
  EXPECT_DOUBLE_EQ(alpha, 2.5e-5);
}

TEST(Callbacks, AccuracyMonitorAndMinAlphaClamp) {
  TrainConfig cfg;
  cfg.early_stop_metric = StopMetric::ValAccuracy;
  CallbackController cb(cfg);
  const std::vector<double> acc = {0.5, 0.5, 0.6, 0.6, 0.6, 0.6, 0.7};
  int stopped = 0;
  for (int e = 1; e <= 40 && !stopped; ++e) {
    const double a = e <= 7 ? acc[static_cast<std::size_t>(e - 1)] : 0.7;
    const auto d = cb.on_epoch_end(1.0 / e, a, 1e-4);  // loss keeps improving
    EXPECT_TRUE(d.checkpoint);
    EXPECT_FALSE(d.lr_reduced);
    if (d.stop) stopped = e;
  }
  EXPECT_EQ(stopped, 17);

  TrainConfig c2;
  c2.plateau_patience = 1;
  c2.min_alpha = 3e-5;
  CallbackController cb2(c2);
  double alpha = 1e-4;
  std::vector<double> alphas;
  for (int e = 1; e <= 5; ++e) {
    alpha = cb2.on_epoch_end(1.0, 0.5, alpha).alpha;
    alphas.push_back(alpha);
  }
  EXPECT_EQ(alphas, (std::vector<double>{1e-4, 5e-5, 3e-5, 3e-5, 3e-5}));
}

std::shared_ptr<const std::vector<Sample>> toy_samples(std::size_t n, std::uint64_t seed) {
  auto out = std::make_shared<std::vector<Sample>>();
  RandomStream rng = make_stream(seed, "toy");
  for (std::size_t i = 0; i < n; ++i) {
    const Label l = i % 2 ? Label::Unstable : Label::Stable;
    Tensor<float> t({1, 8, 8});
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c)
        t[r * 8 + c] = static_cast<float>(rng.uniform(0, 0.3) + (l == Label::Unstable && r < 4 ? 0.6 : 0.0));
    out->push_back({"s" + std::to_string(i), l, t});
  }
  return out;
}

Graph<float> toy_net() {
  Graph<float> g({1, 8, 8});
  g.emplace<Conv2D>("conv", {kGraphInput}, Conv2D<float>::Config{1, 4, 3, 3, 1, 1});
  g.emplace<BatchNorm>("bn", {"conv"}, BatchNorm<float>::Config{4, 0.9, 1e-5});
  g.emplace<ReLU>("relu", {"bn"});
  g.emplace<MaxPool2D>("pool", {"relu"}, MaxPool2D<float>::Config{2, 2, 0});
  g.emplace<GlobalAvgPool>("gap", {"pool"});
  g.emplace<Dropout>("drop", {"gap"}, 0.2);
  g.emplace<Dense>("fc", {"drop"}, Dense<float>::Config{4, 2, 0.0});
  g.emplace<Softmax>("softmax", {"fc"});
  g.set_num_classes(2);
  g.init(7);
  return g;
}

TEST(TrainLoop, LearnsToyTaskDeterministically) {
  const BatchStream train(toy_samples(40, 1), 8, 3), val(toy_samples(16, 2), 8, 0, false);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.adam.alpha = 1e-2;
  cfg.seed = 5;
  auto g1 = toy_net(), g2 = toy_net();
  const auto h1 = train_loop(g1, train, val, cfg);
  const auto h2 = train_loop(g2, train, val, cfg);
  EXPECT_EQ(h1.to_json().dump(), h2.to_json().dump());
  EXPECT_EQ(g1.state().front().data(), g2.state().front().data());
  EXPECT_LT(h1.epochs[static_cast<std::size_t>(h1.best_epoch - 1)].val_loss, h1.epochs.front().val_loss);
  EXPECT_GE(evaluate_stream(g1, val).accuracy, 0.9);
  // The returned weights are the best checkpoint.
  EXPECT_NEAR(evaluate_stream(g1, val).loss, h1.epochs[static_cast<std::size_t>(h1.best_epoch - 1)].val_loss, 1e-6);
}

TEST(TrainLoop, NonFiniteLossAbortsWithPartialHistory) {
  const BatchStream train(toy_samples(8, 1), 4, 3), val(toy_samples(4, 2), 4, 0, false);
  auto g = toy_net();
  g.layer("fc").params()[0]->value[0] = NAN;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  try {
    train_loop(g, train, val, cfg);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalError);
    EXPECT_TRUE(e.history().epochs.empty());
  }
}

}  // namespace
}  // namespace vsm::nn
