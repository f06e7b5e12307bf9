// tests/test_autodiff.cpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <limits>

#include "confp/autodiff.hpp"
#include "confp/optim.hpp"
#include "confp/rng.hpp"
#include "support/oracles.hpp"

using namespace confp;
using namespace confp::ad;
using Catch::Approx;

namespace {

Tensor<double> RandomTensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = scale * (2.0 * rng.Uniform() - 1.0);
  return t;
}

using Leaves = std::vector<Var<double>>;

}  // namespace

TEST_CASE("softmax of an all-equal vector is uniform") {
  Tensor<double> t({1, 5});
  for (auto& v : t.data) v = 3.7;
  auto y = Softmax(Constant(t), 1);
  for (double v : y->value.data) REQUIRE(v == Approx(0.2).epsilon(1e-12));
}

TEST_CASE("layer_norm output has mean 0 and variance 1 before scale/offset") {
  Rng rng(1);
  auto x = Constant(RandomTensor({4, 64}, rng, 2.0));
  auto gamma = Constant(Tensor<double>::Full({1, 64}, 1.0));
  auto beta = Constant(Tensor<double>::Zeros({1, 64}));
  auto y = LayerNorm(x, gamma, beta);
  for (int i = 0; i < 4; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 64; ++j) mean += y->value.at(i, j);
    mean /= 64;
    for (int j = 0; j < 64; ++j) {
      const double d = y->value.at(i, j) - mean;
      var += d * d;
    }
    var /= 64;
    REQUIRE(mean == Approx(0.0).margin(1e-6));
    REQUIRE(var == Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("depthwise conv with an identity tap leaves the input unchanged") {
  Rng rng(2);
  auto x = Constant(RandomTensor({12, 6}, rng));
  Tensor<double> w({3, 6});
  for (int c = 0; c < 6; ++c) w.at(1, c) = 1.0;  // kernel [0, 1, 0]
  auto y = DepthwiseConv1d(x, Constant(w), Constant(Tensor<double>::Zeros({1, 6})));
  REQUIRE(y->value.data == x->value.data);
}

TEST_CASE("attention rows are convex combinations with unit weight sums") {
  const int n = 6;
  Tensor<double> eye({n, n});
  for (int i = 0; i < n; ++i) eye.at(i, i) = 1.0;
  auto q = Constant(eye);
  auto out = ScaledDotProductAttention(q, q, q, 1);

  // Dense enumeration oracle: softmax(I I^T / sqrt(n)) I.
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> logits(n, 0.0);
    logits[static_cast<std::size_t>(i)] = s;
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double w = std::exp(logits[static_cast<std::size_t>(j)]) / denom;
      REQUIRE(out->value.at(i, j) == Approx(w).epsilon(1e-12));
      REQUIRE(w >= 0.0);
      row_sum += w;
    }
    REQUIRE(row_sum == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward of sum(x^2) is 2x") {
  Tensor<double> t({1, 3});
  t.data = {1.0, 2.0, 3.0};
  auto x = Parameter(t, "x");
  auto loss = SumAll(Mul(x, x));
  Backward(loss);
  REQUIRE(x->Grad().data[0] == Approx(2.0));
  REQUIRE(x->Grad().data[1] == Approx(4.0));
  REQUIRE(x->Grad().data[2] == Approx(6.0));
}

TEST_CASE("every op passes central finite-difference checks on random shapes") {
  Rng rng(42);
  auto shapes = [&](int lo, int hi) {
    return std::vector<int>{static_cast<int>(rng.UniformInt(lo, hi)),
                            static_cast<int>(rng.UniformInt(lo, hi))};
  };

  struct OpCase {
    const char* name;
    std::function<double(Rng&)> run;  // returns max rel error
  };

  // For each op: random leaf tensors and a scalar root that routes through it.
  // The probe weights make the root sensitive to every output element. The
  // rng is taken by value so repeated builds see identical weights.
  auto probe_root = [](Var<double> y, Rng rng) {
    Tensor<double> w(y->value.shape);
    for (auto& v : w.data) v = 2.0 * rng.Uniform() - 1.0;
    return SumAll(Mul(y, Constant(w)));
  };

  std::vector<OpCase> cases;
  cases.push_back({"matmul", [&](Rng& r) {
    const int m = static_cast<int>(r.UniformInt(2, 6));
    const int k = static_cast<int>(r.UniformInt(2, 6));
    const int n = static_cast<int>(r.UniformInt(2, 6));
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor({m, k}, r), RandomTensor({k, n}, r)},
        [&](const Leaves& L) { return probe_root(MatMul(L[0], L[1]), pr); });
  }});
  cases.push_back({"add", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r), RandomTensor(s, r)},
        [&](const Leaves& L) { return probe_root(Add(L[0], L[1]), pr); });
  }});
  cases.push_back({"add broadcast", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r), RandomTensor({1, s[1]}, r)},
        [&](const Leaves& L) { return probe_root(Add(L[0], L[1]), pr); });
  }});
  cases.push_back({"mul", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r), RandomTensor(s, r)},
        [&](const Leaves& L) { return probe_root(Mul(L[0], L[1]), pr); });
  }});
  cases.push_back({"transpose+reshape+scale", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r)}, [&](const Leaves& L) {
          auto y = Reshape(Transpose(Scale(L[0], 1.7)), {1, s[0] * s[1]});
          return probe_root(y, pr);
        });
  }});
  cases.push_back({"slice+concat", [&](Rng& r) {
    const int m = static_cast<int>(r.UniformInt(3, 7));
    const int n = static_cast<int>(r.UniformInt(4, 8));
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor({m, n}, r)}, [&](const Leaves& L) {
          auto left = Slice(L[0], 1, 0, n / 2);
          auto right = Slice(L[0], 1, n / 2, n - n / 2);
          auto rows = Slice(L[0], 0, 1, m - 1);
          auto y = Concat(1, std::vector<Var<double>>{right, left});
          return Add(probe_root(y, pr), probe_root(rows, pr));
        });
  }});
  cases.push_back({"softmax", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    const int axis = static_cast<int>(r.UniformInt(0, 1));
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r, 2.0)},
        [&](const Leaves& L) { return probe_root(Softmax(L[0], axis), pr); });
  }});
  cases.push_back({"log_softmax", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r, 2.0)},
        [&](const Leaves& L) { return probe_root(LogSoftmax(L[0], 1), pr); });
  }});
  cases.push_back({"layer_norm", [&](Rng& r) {
    auto s = shapes(3, 7);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r, 2.0), RandomTensor({1, s[1]}, r), RandomTensor({1, s[1]}, r)},
        [&](const Leaves& L) { return probe_root(LayerNorm(L[0], L[1], L[2]), pr); });
  }});
  cases.push_back({"sigmoid+swish+relu", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r, 2.0)}, [&](const Leaves& L) {
          return Add(probe_root(Sigmoid(L[0]), pr),
                     Add(probe_root(Swish(L[0]), pr), probe_root(Relu(L[0]), pr)));
        });
  }});
  cases.push_back({"glu", [&](Rng& r) {
    const int m = static_cast<int>(r.UniformInt(2, 6));
    const int h = static_cast<int>(r.UniformInt(2, 5));
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor({m, 2 * h}, r, 2.0)},
        [&](const Leaves& L) { return probe_root(Glu(L[0], 1), pr); });
  }});
  cases.push_back({"depthwise_conv1d", [&](Rng& r) {
    const int t = static_cast<int>(r.UniformInt(4, 10));
    const int c = static_cast<int>(r.UniformInt(2, 6));
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor({t, c}, r), RandomTensor({5, c}, r), RandomTensor({1, c}, r)},
        [&](const Leaves& L) { return probe_root(DepthwiseConv1d(L[0], L[1], L[2]), pr); });
  }});
  cases.push_back({"mean+sum", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r)}, [&](const Leaves& L) {
          return Add(probe_root(Mean(L[0], 0), pr), probe_root(Mean(L[0], 1), pr));
        });
  }});
  cases.push_back({"l2_normalize", [&](Rng& r) {
    auto s = shapes(2, 6);
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r)},
        [&](const Leaves& L) { return probe_root(L2Normalize(L[0], 1), pr); });
  }});
  cases.push_back({"attention", [&](Rng& r) {
    const int t = static_cast<int>(r.UniformInt(3, 8));
    const int heads = static_cast<int>(r.UniformInt(1, 2));
    const int d = heads * static_cast<int>(r.UniformInt(2, 4));
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor({t, d}, r), RandomTensor({t, d}, r), RandomTensor({t, d}, r)},
        [&](const Leaves& L) {
          return probe_root(ScaledDotProductAttention(L[0], L[1], L[2], heads), pr);
        });
  }});
  cases.push_back({"dropout (fixed mask)", [&](Rng& r) {
    auto s = shapes(3, 6);
    const std::uint64_t seed = r.NextU64();
    Rng pr(r.NextU64());
    return oracle::GradCheck::MaxRelError(
        {RandomTensor(s, r)}, [&, seed](const Leaves& L) {
          Rng drop(seed);
          return probe_root(Dropout(L[0], 0.4, drop, true), pr);
        });
  }});

  for (auto& c : cases) {
    for (int rep = 0; rep < 10; ++rep) {
      INFO(c.name << " rep " << rep);
      REQUIRE(c.run(rng) < 1e-4);
    }
  }
}

TEST_CASE("l2_normalize gradient at a unit vector is the orthogonal projection") {
  Rng rng(9);
  Tensor<double> t({1, 8});
  double ss = 0.0;
  for (auto& v : t.data) {
    v = 2.0 * rng.Uniform() - 1.0;
    ss += v * v;
  }
  for (auto& v : t.data) v /= std::sqrt(ss);  // unit input

  Tensor<double> upstream({1, 8});
  for (auto& v : upstream.data) v = 2.0 * rng.Uniform() - 1.0;

  auto x = Parameter(t, "x");
  auto loss = SumAll(Mul(L2Normalize(x, 1), Constant(upstream)));
  Backward(loss);

  // (I - x x^T) g for a unit-norm x.
  double dot = 0.0;
  for (int j = 0; j < 8; ++j) dot += upstream.data[static_cast<std::size_t>(j)] * t.data[static_cast<std::size_t>(j)];
  for (int j = 0; j < 8; ++j) {
    const double expected = upstream.data[static_cast<std::size_t>(j)] - t.data[static_cast<std::size_t>(j)] * dot;
    REQUIRE(x->Grad().data[static_cast<std::size_t>(j)] == Approx(expected).margin(1e-10));
  }
}

TEST_CASE("shared subexpressions accumulate like duplicated subgraphs") {
  Rng rng(10);
  const auto t = RandomTensor({3, 3}, rng);
  const auto w = RandomTensor({3, 3}, rng);

  auto shared_x = Parameter(t, "x");
  auto shared = MatMul(shared_x, Constant(w));
  auto shared_loss = Add(SumAll(Mul(shared, shared)), SumAll(shared));
  Backward(shared_loss);

  auto dup_x = Parameter(t, "x");
  auto dup1 = MatMul(dup_x, Constant(w));
  auto dup2 = MatMul(dup_x, Constant(w));
  auto dup_loss = Add(SumAll(Mul(dup1, dup2)), SumAll(dup2));
  Backward(dup_loss);

  for (std::size_t i = 0; i < t.data.size(); ++i)
    REQUIRE(shared_x->Grad().data[i] == Approx(dup_x->Grad().data[i]).margin(1e-12));
}

TEST_CASE("dropout in eval mode is bit-exact identity") {
  Rng rng(11);
  auto x = Constant(RandomTensor({5, 5}, rng));
  Rng drop(1);
  auto y = Dropout(x, 0.5, drop, false);
  REQUIRE(y.get() == x.get());
}

TEST_CASE("dropout scales survivors by 1/(1-rate)") {
  Rng drop(3);
  Tensor<double> t = Tensor<double>::Full({1, 1000}, 1.0);
  auto y = Dropout(Constant(t), 0.25, drop, true);
  int kept = 0;
  for (double v : y->value.data) {
    REQUIRE((v == 0.0 || v == Approx(1.0 / 0.75).epsilon(1e-12)));
    if (v != 0.0) ++kept;
  }
  REQUIRE(kept > 650);
  REQUIRE(kept < 850);
}

TEST_CASE("shape mismatches name the op and shapes") {
  Rng rng(12);
  auto a = Constant(RandomTensor({2, 3}, rng));
  auto b = Constant(RandomTensor({4, 5}, rng));
  try {
    MatMul(a, b);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("matmul") != std::string::npos);
    REQUIRE(std::string(e.what()).find("[2x3]") != std::string::npos);
    REQUIRE(std::string(e.what()).find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("backward requires a scalar root") {
  Rng rng(13);
  auto x = Parameter(RandomTensor({2, 2}, rng), "x");
  auto y = Mul(x, x);
  REQUIRE_THROWS_AS(Backward(y), Error);
}

TEST_CASE("finite checks flag catches non-finite op outputs") {
  Tensor<double> t({1, 2});
  t.data = {1e308, 1e308};
  SetFiniteChecks(true);
  auto x = Parameter(t, "x");  // parameters make the node differentiable
  REQUIRE_THROWS_AS(Mul(x, x), Error);
  SetFiniteChecks(false);
  REQUIRE_NOTHROW(Mul(x, x));
}

// --- Adam --------------------------------------------------------------------

TEST_CASE("adam with zero gradient and no decay leaves parameters unchanged") {
  Tensor<double> p({1, 3});
  p.data = {0.5, -0.25, 2.0};
  const auto before = p.data;
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamStep(p, Tensor<double>::Zeros({1, 3}), st, cfg, "p");
  REQUIRE(p.data == before);
}

TEST_CASE("adam first step moves by -lr * sign(g)") {
  for (double g : {0.3, -1.7}) {
    Tensor<double> p({1, 1});
    p.data = {1.0};
    Tensor<double> grad({1, 1});
    grad.data = {g};
    AdamState<double> st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamStep(p, grad, st, cfg, "p");
    REQUIRE(p.data[0] == Approx(1.0 - cfg.lr * (g > 0 ? 1.0 : -1.0)).margin(1e-6));
  }
}

TEST_CASE("decoupled decay shrinks by (1 - lr*lambda) per step under zero gradient") {
  Tensor<double> p({1, 1});
  p.data = {2.0};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.05;
  for (int i = 1; i <= 5; ++i) {
    AdamStep(p, Tensor<double>::Zeros({1, 1}), st, cfg, "p");
    REQUIRE(p.data[0] == Approx(2.0 * std::pow(1.0 - 0.1 * 0.05, i)).epsilon(1e-12));
  }
}

TEST_CASE("adam matches a 20-step scalar reference trace") {
  // Hand-rolled reference, written out in full.
  double m = 0.0, v = 0.0, ref = 0.7;
  const double lr = 0.003, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Rng rng(77);
  std::vector<double> grads;
  for (int i = 0; i < 20; ++i) grads.push_back(2.0 * rng.Uniform() - 1.0);

  Tensor<double> p({1, 1});
  p.data = {0.7};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = lr;
  for (int t = 1; t <= 20; ++t) {
    const double g = grads[static_cast<std::size_t>(t - 1)];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    ref -= lr * mh / (std::sqrt(vh) + eps);

    Tensor<double> grad({1, 1});
    grad.data = {g};
    AdamStep(p, grad, st, cfg, "p");
    REQUIRE(p.data[0] == Approx(ref).margin(1e-12));
  }
}

TEST_CASE("adam aborts on non-finite gradients, naming the parameter") {
  Tensor<double> p({1, 1});
  p.data = {1.0};
  Tensor<double> grad({1, 1});
  grad.data = {std::numeric_limits<double>::quiet_NaN()};
  AdamState<double> st;
  AdamConfig cfg;
  try {
    AdamStep(p, grad, st, cfg, "block0.attn.wq");
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("block0.attn.wq") != std::string::npos);
  }
}
