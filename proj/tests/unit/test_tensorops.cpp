// Copyright 2026 The MicroSeg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "archgen/archgen.hpp"
#include "doctest.h"
#include "tensorops/kernels.hpp"
#include "tensorops/model.hpp"
#include "test_util.hpp"

using namespace microseg;
using namespace microseg::tensorops;
using archgen::LayerKind;
using testing::RandomTensor;

namespace {

template <typename T>
LayerParams<T> ConvParams(int k, int cin, int cout, uint64_t seed) {
  LayerParams<T> p;
  p.weights = RandomTensor<T>({k, k, cin, cout}, seed);
  p.bias = RandomTensor<T>({1, 1, 1, cout}, seed + 1).vec();
  return p;
}

// Plain loop nest with explicit zero padding.
Tensor<double> ReferenceConv(const Tensor<double>& x, const LayerParams<double>& p) {
  const int k = p.weights.shape().n, cin = x.c(), cout = p.weights.shape().c;
  const int pad = k / 2;
  Tensor<double> y({x.n(), x.h(), x.w(), cout});
  for (int n = 0; n < x.n(); ++n)
    for (int i = 0; i < x.h(); ++i)
      for (int j = 0; j < x.w(); ++j)
        for (int co = 0; co < cout; ++co) {
          double acc = p.bias[co];
          for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
              for (int ci = 0; ci < cin; ++ci) {
                const int r = i + a - pad, c = j + b - pad;
                const double v = (r < 0 || r >= x.h() || c < 0 || c >= x.w()) ? 0.0
                                                                              : x.at(n, r, c, ci);
                acc += v * p.weights.at(a, b, ci, co);
              }
          y.at(n, i, j, co) = acc;
        }
  return y;
}

double MaxAbsDiff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

ModelParams<double> RandomParams(const archgen::LayerGraph& g, uint64_t seed) {
  auto p = ZeroParams<double>(g);
  for (size_t i = 0; i < p.size(); ++i) {
    CounterRng rng(seed + 101 * i);
    for (auto& v : p[i].weights.vec()) v = rng.Uniform(-0.8, 0.8);
    for (auto& v : p[i].bias) v = rng.Uniform(-0.3, 0.3);
    for (auto& v : p[i].moving_mean) v = rng.Uniform(-0.2, 0.2);
    for (auto& v : p[i].moving_var) v = rng.Uniform(0.5, 1.5);
  }
  return p;
}

// Checks every input, weight and bias gradient of L = sum(y * r) against
// central differences.
void CheckGradients(const archgen::LayerGraph& g, Mode mode, int batch, uint64_t seed,
                    double tol = 1e-5) {
  auto params = RandomParams(g, seed);
  auto x = RandomTensor<double>({batch, g.input_shape.h, g.input_shape.w, g.input_shape.c},
                                seed + 7);
  const auto& os = g.output_shape();
  const auto r = RandomTensor<double>({batch, os.h, os.w, os.c}, seed + 9);
  auto loss = [&] {
    const auto y = ModelForward<double>(g, params, x, mode);
    double s = 0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  ForwardCache<double> cache;
  ModelForward<double>(g, params, x, mode, &cache);
  const auto grads = ModelBackward<double>(g, params, cache, r);

  double worst = 0;
  for (int64_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, testing::RelError(testing::CentralDifference(loss, &x[i]),
                                              grads.dx[i]));
  }
  for (size_t l = 0; l < params.size(); ++l) {
    for (int64_t i = 0; i < params[l].weights.size(); ++i) {
      worst = std::max(worst,
                       testing::RelError(testing::CentralDifference(loss, &params[l].weights[i]),
                                         grads.params[l].weights[i]));
    }
    for (size_t i = 0; i < params[l].bias.size(); ++i) {
      worst = std::max(worst, testing::RelError(testing::CentralDifference(loss, &params[l].bias[i]),
                                                grads.params[l].bias[i]));
    }
  }
  CHECK(worst < tol);
}

}  // namespace

TEST_SUITE("tensorops") {
  TEST_CASE("conv matches a loop-nest reference") {
    for (int k : {1, 3}) {
      const auto x = RandomTensor<double>({2, 5, 6, 3}, 11);
      const auto p = ConvParams<double>(k, 3, 4, 12);
      CHECK(MaxAbsDiff(Conv2dForward(x, p), ReferenceConv(x, p)) < 1e-12);
    }
  }

  TEST_CASE("identity kernels") {
    const auto x = RandomTensor<double>({1, 4, 4, 2}, 3);
    LayerParams<double> p;
    p.weights = Tensor<double>({3, 3, 2, 2});
    p.weights.at(1, 1, 0, 0) = 1;
    p.weights.at(1, 1, 1, 1) = 1;
    p.bias = {0, 0};
    CHECK(Conv2dForward(x, p) == x);

    LayerParams<double> dw;
    dw.weights = Tensor<double>({3, 3, 2, 1});
    dw.weights.at(1, 1, 0, 0) = 1;
    dw.weights.at(1, 1, 1, 0) = 1;
    dw.bias = {0, 0};
    CHECK(DepthwiseConvForward(x, dw) == x);
  }

  TEST_CASE("3x3 conv of ones over a 4x4 ones image counts neighbours") {
    Tensor<double> x({1, 4, 4, 1}, 1.0);
    LayerParams<double> p;
    p.weights = Tensor<double>({3, 3, 1, 1}, 1.0);
    p.bias = {0};
    const auto y = Conv2dForward(x, p);
    CHECK(y.at(0, 0, 0, 0) == 4);
    CHECK(y.at(0, 0, 1, 0) == 6);
    CHECK(y.at(0, 1, 1, 0) == 9);
  }

  TEST_CASE("depthwise then pointwise equals the factored full conv") {
    const int cin = 3, cout = 5;
    const auto x = RandomTensor<double>({1, 6, 5, cin}, 21);
    LayerParams<double> dw;
    dw.weights = RandomTensor<double>({3, 3, cin, 1}, 22);
    dw.bias.assign(cin, 0.0);
    LayerParams<double> pw;
    pw.weights = RandomTensor<double>({1, 1, cin, cout}, 23);
    pw.bias = RandomTensor<double>({1, 1, 1, cout}, 24).vec();
    LayerParams<double> full;
    full.weights = Tensor<double>({3, 3, cin, cout});
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int ci = 0; ci < cin; ++ci)
          for (int co = 0; co < cout; ++co)
            full.weights.at(a, b, ci, co) = dw.weights.at(a, b, ci, 0) * pw.weights.at(0, 0, ci, co);
    full.bias = pw.bias;
    CHECK(MaxAbsDiff(PointwiseConvForward(DepthwiseConvForward(x, dw), pw),
                     Conv2dForward(x, full)) < 1e-12);
  }

  TEST_CASE("max pool picks the block maximum") {
    Tensor<double> x({1, 4, 4, 1});
    for (int i = 0; i < 16; ++i) x[i] = (i * 7) % 16;
    std::vector<int64_t> argmax;
    const auto y = MaxPoolForward(x, &argmax);
    REQUIRE(y.shape() == Shape4{1, 2, 2, 1});
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double m = -1;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) m = std::max(m, x.at(0, 2 * i + a, 2 * j + b, 0));
        CHECK(y.at(0, i, j, 0) == m);
      }
    const auto dx = MaxPoolBackward<double>(x.shape(), argmax, Tensor<double>(y.shape(), 1.0));
    double total = 0;
    for (auto v : dx.vec()) total += v;
    CHECK(total == 4);
  }

  TEST_CASE("transposed conv stamps the kernel") {
    Tensor<double> x({1, 1, 1, 1}, 2.0);
    LayerParams<double> p;
    p.weights = Tensor<double>({2, 2, 1, 1});
    p.weights.vec() = {1, 2, 3, 4};
    p.bias = {0.5};
    const auto y = TransposedConvForward(x, p);
    REQUIRE(y.shape() == Shape4{1, 2, 2, 1});
    CHECK(y.vec() == std::vector<double>{2.5, 4.5, 6.5, 8.5});
  }

  TEST_CASE("concat orders channels first operand first") {
    Tensor<double> a({1, 1, 2, 1});
    a.vec() = {1, 2};
    Tensor<double> b({1, 1, 2, 2});
    b.vec() = {10, 11, 20, 21};
    const auto y = ConcatChannels(a, b);
    CHECK(y.vec() == std::vector<double>{1, 10, 11, 2, 20, 21});
    const auto [da, db] = ConcatBackward(y, 1);
    CHECK(da == a);
    CHECK(db == b);
  }

  TEST_CASE("finite-difference gradients of each layer") {
    const archgen::Shape3 in{4, 4, 3};
    SUBCASE("conv3x3") { CheckGradients(testing::OneLayer(LayerKind::kConv3x3, in, 2), Mode::kInference, 2, 1); }
    SUBCASE("conv1x1") { CheckGradients(testing::OneLayer(LayerKind::kConv1x1Out, in, 1), Mode::kInference, 2, 2); }
    SUBCASE("depthwise") { CheckGradients(testing::OneLayer(LayerKind::kDepthwiseConv3x3, in, 3), Mode::kInference, 2, 3); }
    SUBCASE("pointwise") { CheckGradients(testing::OneLayer(LayerKind::kPointwiseConv1x1, in, 4), Mode::kInference, 2, 4); }
    SUBCASE("transposed") { CheckGradients(testing::OneLayer(LayerKind::kTransposedConv2x2, in, 2), Mode::kInference, 2, 5); }
    SUBCASE("maxpool") { CheckGradients(testing::OneLayer(LayerKind::kMaxPool2x2, in), Mode::kInference, 2, 6); }
    SUBCASE("relu") { CheckGradients(testing::OneLayer(LayerKind::kRelu, in), Mode::kInference, 2, 7); }
    SUBCASE("sigmoid") { CheckGradients(testing::OneLayer(LayerKind::kSigmoid, in), Mode::kInference, 2, 8); }
    SUBCASE("batchnorm train") { CheckGradients(testing::OneLayer(LayerKind::kBatchNorm, in), Mode::kTraining, 3, 9); }
    SUBCASE("concat") {
      std::vector<archgen::LayerSpec> L;
      archgen::Shape3 cur = in;
      testing::Push(L, cur, LayerKind::kConv3x3, 2);
      testing::Push(L, cur, LayerKind::kSigmoid);
      testing::Push(L, cur, LayerKind::kConcat, 0, 0);
      CheckGradients(archgen::AssembleGraph({}, in, L), Mode::kInference, 2, 11);
    }
  }

  TEST_CASE("finite-difference gradients of a two-block U-Net") {
    CheckGradients(testing::TwoBlockUnet(4, 4, 2, false), Mode::kTraining, 2, 31);
    CheckGradients(testing::TwoBlockUnet(4, 4, 2, true), Mode::kTraining, 2, 32);
  }

  TEST_CASE("two-block U-Net forward equals hand-chained kernels") {
    for (bool dw : {false, true}) {
      const auto g = testing::TwoBlockUnet(8, 8, 4, dw);
      const auto params = RandomParams(g, 41);
      const auto x = RandomTensor<double>({2, 8, 8, 3}, 42, 0.0, 1.0);
      std::vector<Tensor<double>> out{x};
      for (size_t i = 0; i < g.layers.size(); ++i) {
        const auto& l = g.layers[i];
        const auto& in = out.back();
        const auto& p = params[i];
        switch (l.kind) {
          case LayerKind::kConv3x3:
          case LayerKind::kConv1x1Out: out.push_back(Conv2dForward(in, p)); break;
          case LayerKind::kDepthwiseConv3x3: out.push_back(DepthwiseConvForward(in, p)); break;
          case LayerKind::kPointwiseConv1x1: out.push_back(PointwiseConvForward(in, p)); break;
          case LayerKind::kBatchNorm: out.push_back(BatchNormInferForward(in, p)); break;
          case LayerKind::kRelu: out.push_back(Relu(in)); break;
          case LayerKind::kMaxPool2x2: out.push_back(MaxPoolForward<double>(in, nullptr)); break;
          case LayerKind::kTransposedConv2x2: out.push_back(TransposedConvForward(in, p)); break;
          case LayerKind::kConcat: out.push_back(ConcatChannels(in, out[*l.skip_source + 1])); break;
          case LayerKind::kSigmoid: out.push_back(Sigmoid(in)); break;
        }
      }
      const auto y = ModelForward<double>(g, params, x);
      CHECK(MaxAbsDiff(y, out.back()) < 1e-5);
      const auto yf = ModelForward<float>(g, CastParams<float>(params), Cast<float>(x));
      CHECK(MaxAbsDiff(Cast<double>(yf), y) < 1e-5);
    }
  }

  TEST_CASE("zero weights give probability one half everywhere") {
    for (const auto& c : {archgen::ParseConfigId("d3_x1-16_std"), archgen::ParseConfigId("d4_x1-8_dw")}) {
      const auto g = archgen::BuildGraph(c);
      const auto y = ModelForward<float>(g, ZeroParams<float>(g),
                                         RandomTensor<float>({1, 96, 96, 3}, 5, 0, 1));
      for (auto v : y.vec()) REQUIRE(v == 0.5f);
    }
  }

  TEST_CASE("mismatched parameters are rejected") {
    const auto g = testing::TwoBlockUnet(8, 8, 4, false);
    auto params = ZeroParams<float>(g);
    CHECK_NOTHROW(CheckParams(g, params));
    params[0].weights = Tensor<float>({3, 3, 3, 5});
    CHECK_THROWS_AS(CheckParams(g, params), Error);
  }

  TEST_CASE("backward without a cache is refused") {
    const auto g = testing::TwoBlockUnet(4, 4, 2, false);
    ForwardCache<float> empty;
    CHECK_THROWS_AS(ModelBackward<float>(g, ZeroParams<float>(g), empty,
                                         Tensor<float>({1, 4, 4, 1})),
                    Error);
  }
}
