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

#include <cstdint>
#include <vector>

#include "archgen/archgen.hpp"
#include "tensorops/kernels.hpp"
#include "tensorops/tensor.hpp"

namespace microseg::tensorops {

// One LayerParams per graph layer; parameter-free layers hold empty params.
template <typename T>
using ModelParams = std::vector<LayerParams<T>>;

enum class Mode { kInference, kTraining };

// Everything the backward pass needs. outputs[0] is the model input and
// outputs[i + 1] the output of layer i.
template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> outputs;
  std::vector<std::vector<int64_t>> argmax;
  std::vector<BatchNormCache<T>> batch_norm;
};

// Zero-valued parameters with the shapes the graph requires (batch norm
// gamma and moving variance are 1).
template <typename T>
ModelParams<T> ZeroParams(const archgen::LayerGraph& graph);

// He-uniform weights with limit sqrt(6 / fan_in), zero biases, identity batch
// norm. fan_in follows the Keras convention kh * kw * shape[2], giving
// 9*Cin (conv), 9*C (depthwise), Cin (pointwise), 4*Cout (transposed).
ModelParams<float> InitParams(const archgen::LayerGraph& graph, uint64_t seed);

// Throws Error(kShape) unless every parameter tensor matches the graph.
template <typename T>
void CheckParams(const archgen::LayerGraph& graph, const ModelParams<T>& params);

// Runs the graph. In training mode batch norm uses batch statistics. When
// `cache` is non-null it receives every intermediate tensor.
template <typename T>
Tensor<T> ModelForward(const archgen::LayerGraph& graph,
                       const ModelParams<T>& params, const Tensor<T>& x,
                       Mode mode = Mode::kInference,
                       ForwardCache<T>* cache = nullptr);

// Forward pass stopping before the final sigmoid (when the graph ends with
// one), returning logits.
template <typename T>
Tensor<T> ModelLogits(const archgen::LayerGraph& graph,
                      const ModelParams<T>& params, const Tensor<T>& x);

template <typename T>
struct ModelGrads {
  ModelParams<T> params;  // weights/bias hold dL/dweights, dL/dbias
  Tensor<T> dx;           // dL/dinput
};

// Reverse pass given dL/d(model output). Requires the cache from a forward
// pass over the same params and input; throws Error(kInvalidArgument) if the
// cache is missing or incomplete.
template <typename T>
ModelGrads<T> ModelBackward(const archgen::LayerGraph& graph,
                            const ModelParams<T>& params,
                            const ForwardCache<T>& cache,
                            const Tensor<T>& dout);

template <typename To, typename From>
ModelParams<To> CastParams(const ModelParams<From>& p) {
  ModelParams<To> out(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    if (!p[i].weights.empty()) out[i].weights = Cast<To>(p[i].weights);
    out[i].bias.assign(p[i].bias.begin(), p[i].bias.end());
    out[i].moving_mean.assign(p[i].moving_mean.begin(), p[i].moving_mean.end());
    out[i].moving_var.assign(p[i].moving_var.begin(), p[i].moving_var.end());
  }
  return out;
}

}  // namespace microseg::tensorops
