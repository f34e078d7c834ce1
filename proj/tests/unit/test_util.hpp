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

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "archgen/archgen.hpp"
#include "common/rng.hpp"
#include "tensorops/model.hpp"
#include "tensorops/tensor.hpp"

namespace microseg::testing {

template <typename T>
tensorops::Tensor<T> RandomTensor(const tensorops::Shape4& s, uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed);
  tensorops::Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(rng.Uniform(lo, hi));
  return t;
}

template <typename T>
tensorops::Tensor<T> RandomMask(const tensorops::Shape4& s, uint64_t seed,
                                double rate = 0.3) {
  CounterRng rng(seed);
  tensorops::Tensor<T> t(s);
  for (auto& v : t.vec()) v = rng.NextDouble() < rate ? T{1} : T{0};
  return t;
}

// Relative error with an absolute floor: gradients whose true value is zero
// (biases feeding a batch norm) are compared absolutely.
inline double RelError(double numeric, double analytic, double floor = 1e-3) {
  return std::fabs(numeric - analytic) /
         std::max({std::fabs(numeric), std::fabs(analytic), floor});
}

// Central differences of `loss` with respect to *x.
inline double CentralDifference(const std::function<double()>& loss, double* x,
                                double h = 1e-6) {
  const double orig = *x;
  *x = orig + h;
  const double up = loss();
  *x = orig - h;
  const double down = loss();
  *x = orig;
  return (up - down) / (2.0 * h);
}

// Single-layer graph on `in`.
inline archgen::LayerGraph OneLayer(archgen::LayerKind kind, archgen::Shape3 in,
                                    int filters = 0) {
  archgen::LayerSpec l;
  l.kind = kind;
  l.in_shape = in;
  l.filters = filters;
  l.out_shape = archgen::InferOutputShape(kind, in, filters, nullptr);
  archgen::ArchConfig c;
  c.input_h = in.h;
  c.input_w = in.w;
  c.input_c = in.c;
  return archgen::AssembleGraph(c, in, {l});
}

// Appends a layer reading the current graph output.
inline void Push(std::vector<archgen::LayerSpec>& layers, archgen::Shape3& cur,
                 archgen::LayerKind kind, int filters = 0,
                 std::optional<int> skip = std::nullopt) {
  archgen::LayerSpec l;
  l.kind = kind;
  l.in_shape = cur;
  l.filters = filters;
  l.skip_source = skip;
  const archgen::Shape3* s = skip ? &layers[*skip].out_shape : nullptr;
  l.out_shape = archgen::InferOutputShape(kind, cur, filters, s);
  cur = l.out_shape;
  layers.push_back(l);
}

// U-Net with one encoder block and a bottleneck (two conv blocks).
inline archgen::LayerGraph TwoBlockUnet(int h, int w, int f, bool depthwise) {
  using K = archgen::LayerKind;
  std::vector<archgen::LayerSpec> L;
  archgen::Shape3 cur{h, w, 3};
  auto block = [&](int filters) {
    if (depthwise) {
      Push(L, cur, K::kDepthwiseConv3x3, cur.c);
      Push(L, cur, K::kPointwiseConv1x1, filters);
      Push(L, cur, K::kBatchNorm);
    } else {
      Push(L, cur, K::kConv3x3, filters);
      Push(L, cur, K::kRelu);
      Push(L, cur, K::kConv3x3, filters);
    }
    Push(L, cur, K::kRelu);
  };
  block(f);
  const int skip = static_cast<int>(L.size()) - 1;
  Push(L, cur, K::kMaxPool2x2);
  block(2 * f);
  Push(L, cur, K::kTransposedConv2x2, f);
  Push(L, cur, K::kConcat, 0, skip);
  block(f);
  Push(L, cur, K::kConv1x1Out, 1);
  Push(L, cur, K::kSigmoid);
  archgen::ArchConfig c;
  c.depth = 2;
  c.input_h = h;
  c.input_w = w;
  c.conv_type = depthwise ? archgen::ConvType::kDepthwiseSeparable
                          : archgen::ConvType::kStandard;
  return archgen::AssembleGraph(c, {h, w, 3}, std::move(L));
}

inline std::filesystem::path TempDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("microseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace microseg::testing
