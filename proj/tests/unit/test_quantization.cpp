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

#include "dataio/dataset.hpp"
#include "doctest.h"
#include "quantization/quantize.hpp"
#include "tensorops/model.hpp"
#include "test_util.hpp"

using namespace microseg;
using namespace microseg::quantization;
using archgen::LayerKind;
using tensorops::Tensor;

namespace {

std::vector<const Tensor<float>*> Ptrs(const std::vector<Tensor<float>>& v) {
  std::vector<const Tensor<float>*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

}  // namespace

TEST_SUITE("quantization") {
  TEST_CASE("activation parameters") {
    bool degenerate = true;
    auto qp = ChooseActivationParams({-1.0f, 1.0f}, &degenerate);
    CHECK(!degenerate);
    CHECK(qp.scale == doctest::Approx(2.0 / 255));
    CHECK(qp.zero_point == static_cast<int>(std::nearbyint(1.0f / qp.scale)) - 128);
    qp = ChooseActivationParams({0.0f, 5.1f});
    CHECK(qp.zero_point == -128);
    CHECK(QuantizeValue(0.0f, qp) == -128);
    CHECK(QuantizeValue(5.1f, qp) == 127);
    CHECK(QuantizeValue(100.0f, qp) == 127);
    qp = ChooseActivationParams({0.0f, 0.0f}, &degenerate);
    CHECK(degenerate);
    CHECK(qp.scale == kMinScale);
  }

  TEST_CASE("quantize then dequantize stays within half a step") {
    const auto qp = ChooseActivationParams({-3.0f, 7.0f});
    for (int i = 0; i <= 1000; ++i) {
      const float x = -3.0f + 10.0f * i / 1000;
      REQUIRE(std::fabs(DequantizeValue(QuantizeValue(x, qp), qp) - x) <= qp.scale / 2 * 1.0001);
    }
    const auto t = testing::RandomTensor<float>({1, 4, 4, 2}, 3, -3, 7);
    const auto back = DequantizeTensor(QuantizeTensor(t, qp), qp);
    for (int64_t i = 0; i < t.size(); ++i) CHECK(std::fabs(back[i] - t[i]) <= qp.scale / 2 * 1.0001);
  }

  TEST_CASE("per-channel weight scales") {
    const auto g = testing::OneLayer(LayerKind::kConv3x3, {4, 4, 2}, 3);
    auto p = tensorops::ZeroParams<float>(g);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int ci = 0; ci < 2; ++ci) {
          p[0].weights.at(a, b, ci, 0) = 0.25f;   // equal weights
          p[0].weights.at(a, b, ci, 1) = -0.5f * (a + 1) / 3;
        }
    // Channel 2 stays all zero.
    const auto x = testing::RandomTensor<float>({1, 4, 4, 2}, 1, 0, 1);
    const auto qm = QuantizeModel(g, p, Calibrate(g, p, {&x}));
    const auto& ql = qm.layers[0];
    REQUIRE(ql.weight_scale.size() == 3);
    CHECK(ql.weight_scale[0] == doctest::Approx(0.25 / 127));
    CHECK(ql.weight_scale[1] == doctest::Approx(0.5 / 127));
    CHECK(ql.weight_scale[2] == 1.0f);
    for (int64_t k = 0; k < static_cast<int64_t>(ql.weights.size()); ++k) {
      const int co = static_cast<int>(k % 3);
      if (co == 0) REQUIRE(ql.weights[k] == 127);
      if (co == 2) REQUIRE(ql.weights[k] == 0);
      REQUIRE(ql.weights[k] >= -127);
    }
    CHECK_NOTHROW(CheckQuantizedModel(qm));
  }

  TEST_CASE("single conv stays within one output step of float") {
    const auto g = testing::OneLayer(LayerKind::kConv3x3, {6, 6, 3}, 4);
    tensorops::ModelParams<float> p = tensorops::InitParams(g, 2);
    for (auto& b : p[0].bias) b = 0.1f;
    std::vector<Tensor<float>> calib;
    for (uint64_t s = 0; s < 8; ++s) calib.push_back(testing::RandomTensor<float>({1, 6, 6, 3}, s, 0, 1));
    const auto qm = QuantizeModel(g, p, Calibrate(g, p, Ptrs(calib)));
    const float out_scale = qm.activations[1].scale;
    // Float conv over the dequantized int8 operands.
    tensorops::ModelParams<float> dq = p;
    for (size_t k = 0; k < qm.layers[0].weights.size(); ++k) {
      dq[0].weights[static_cast<int64_t>(k)] =
          qm.layers[0].weights[k] * qm.layers[0].weight_scale[k % 4];
    }
    for (const auto& x : calib) {
      const auto xq = DequantizeTensor(QuantizeTensor(x, qm.activations[0]), qm.activations[0]);
      const auto ref = tensorops::ModelForward<float>(g, dq, xq);
      const auto raw = tensorops::ModelForward<float>(g, p, x);
      const auto q = QuantizedForward(qm, x);
      for (int64_t i = 0; i < ref.size(); ++i) {
        REQUIRE(std::fabs(q[i] - ref[i]) <= out_scale * 1.0001);
        REQUIRE(std::fabs(q[i] - raw[i]) <= 2 * out_scale);
      }
    }
  }

  TEST_CASE("zero weights give exactly one half") {
    for (const char* id : {"d3_x1-16_std", "d3_x1-16_dw"}) {
      const auto g = archgen::BuildGraph(archgen::ParseConfigId(id));
      const auto p = tensorops::ZeroParams<float>(g);
      const auto s = dataio::SynthCracks(2, 0);
      QuantizationReport report;
      const auto qm = QuantizeModel(g, p, Calibrate(g, p, {&s[0].image, &s[1].image}), &report);
      const auto y = QuantizedForward(qm, s[0].image);
      for (auto v : y.vec()) REQUIRE(v == 0.5f);
      CHECK(report.degenerate_edges > 0);
    }
  }

  TEST_CASE("calibration ranges contain zero and grow with more data") {
    const auto g = testing::TwoBlockUnet(8, 8, 4, true);
    const auto p = tensorops::InitParams(g, 5);
    std::vector<Tensor<float>> xs;
    for (uint64_t s = 0; s < 6; ++s) xs.push_back(testing::RandomTensor<float>({1, 8, 8, 3}, s, 0, 1));
    const auto small = Calibrate(g, p, {&xs[0], &xs[1]});
    const auto big = Calibrate(g, p, Ptrs(xs));
    REQUIRE(small.size() == g.layers.size() + 1);
    for (size_t e = 0; e < small.size(); ++e) {
      CHECK(small[e].min <= 0.0f);
      CHECK(small[e].max >= 0.0f);
      CHECK(big[e].min <= small[e].min);
      CHECK(big[e].max >= small[e].max);
    }
    CHECK_THROWS_AS(Calibrate(g, p, {}), Error);
  }

  TEST_CASE("int8 U-Net tracks the float model") {
    const auto g = testing::TwoBlockUnet(16, 16, 4, true);
    const auto p = tensorops::InitParams(g, 7);
    const auto s = dataio::SynthCracks(6, 2, {16, 16});
    std::vector<const Tensor<float>*> calib;
    for (const auto& x : s) calib.push_back(&x.image);
    QuantizationReport report;
    const auto qm = QuantizeModel(g, p, Calibrate(g, p, calib), &report);
    double worst = 0;
    for (const auto& x : s) {
      const auto f = tensorops::ModelLogits<float>(g, p, x.image);
      const auto q = QuantizedLogits(qm, x.image);
      for (int64_t i = 0; i < f.size(); ++i) worst = std::max(worst, double(std::fabs(q[i] - f[i])));
    }
    const auto& last = qm.activations[g.layers.size() - 1];
    float lo = 1e30f, hi = -1e30f;
    for (const auto& x : s) {
      const auto f = tensorops::ModelLogits<float>(g, p, x.image);
      for (auto v : f.vec()) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    CHECK(worst <= 0.1 * (hi - lo) + 2 * last.scale);
    const auto j = ReportToJson(qm, report);
    CHECK(j.at("edges").size() == g.layers.size() + 1);
  }

  TEST_CASE("inconsistent quantized models are rejected") {
    const auto g = testing::OneLayer(LayerKind::kConv3x3, {4, 4, 2}, 3);
    const auto p = tensorops::InitParams(g, 1);
    const auto x = testing::RandomTensor<float>({1, 4, 4, 2}, 1, 0, 1);
    auto qm = QuantizeModel(g, p, Calibrate(g, p, {&x}));
    qm.layers[0].weights.pop_back();
    CHECK_THROWS_AS(CheckQuantizedModel(qm), Error);
  }
}
