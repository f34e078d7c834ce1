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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "archgen/archgen.hpp"
#include "json.hpp"
#include "tensorops/model.hpp"
#include "tensorops/tensor.hpp"

namespace microseg::quantization {

// real = scale * (q - zero_point)
struct QuantParams {
  float scale = 1.0f;
  int32_t zero_point = 0;

  bool operator==(const QuantParams&) const = default;
};

struct Range {
  float min = 0.0f;
  float max = 0.0f;
};

// Weighted layers hold int8 weights in the float layout, int32 biases and
// one symmetric scale per output channel. Other layers hold nothing; batch
// norm is folded into the preceding pointwise conv.
struct QuantizedLayer {
  std::vector<int8_t> weights;
  std::vector<int32_t> bias;
  std::vector<float> weight_scale;

  bool operator==(const QuantizedLayer&) const = default;
};

// activations[0] is the model input edge and activations[i + 1] the output
// of layer i.
struct QuantizedModel {
  archgen::LayerGraph graph;
  std::vector<QuantizedLayer> layers;
  std::vector<QuantParams> activations;
};

inline constexpr float kMinScale = 1e-9f;

// Running min/max of every edge over the representative inputs in inference
// mode, starting from [0, 0] so each range contains 0. Throws Error(kEmpty)
// for an empty set.
std::vector<Range> Calibrate(const archgen::LayerGraph& graph,
                             const tensorops::ModelParams<float>& params,
                             const std::vector<const tensorops::Tensor<float>*>& representative);

// Asymmetric per-tensor parameters: scale (max - min) / 255 (floored at
// kMinScale), zero_point round(-min / scale) - 128 clamped to [-128, 127].
QuantParams ChooseActivationParams(const Range& range, bool* degenerate = nullptr);

inline int8_t QuantizeValue(float x, const QuantParams& qp) {
  const double q = std::nearbyint(static_cast<double>(x) / qp.scale) + qp.zero_point;
  return static_cast<int8_t>(q < -128.0 ? -128.0 : (q > 127.0 ? 127.0 : q));
}

inline float DequantizeValue(int8_t q, const QuantParams& qp) {
  return qp.scale * static_cast<float>(static_cast<int32_t>(q) - qp.zero_point);
}

struct EdgeReport {
  int edge = 0;
  Range range;
  QuantParams params;
  bool degenerate = false;
};

struct QuantizationReport {
  std::vector<EdgeReport> edges;
  int degenerate_edges = 0;
};

// Folds batch norm, quantizes weights per output channel (scale max|w| / 127,
// values clamped to [-127, 127]; an all-zero channel gets scale 1) and biases
// to int32 at scale input_scale * weight_scale. Max-pool edges share their
// input parameters, concat edges take the upsampled branch's parameters and
// folded batch-norm edges take the batch-norm output range.
QuantizedModel QuantizeModel(const archgen::LayerGraph& graph,
                             const tensorops::ModelParams<float>& params,
                             const std::vector<Range>& ranges,
                             QuantizationReport* report = nullptr);

tensorops::Tensor<int8_t> QuantizeTensor(const tensorops::Tensor<float>& x,
                                         const QuantParams& qp);
tensorops::Tensor<float> DequantizeTensor(const tensorops::Tensor<int8_t>& q,
                                          const QuantParams& qp);

// Integer pipeline up to the last layer before the final sigmoid; returns the
// dequantized logits.
tensorops::Tensor<float> QuantizedLogits(const QuantizedModel& qm,
                                         const tensorops::Tensor<float>& x);

// QuantizedLogits followed by a float sigmoid when the graph ends in one.
tensorops::Tensor<float> QuantizedForward(const QuantizedModel& qm,
                                          const tensorops::Tensor<float>& x);

// Throws Error(kShape) unless every layer and edge is populated consistently.
void CheckQuantizedModel(const QuantizedModel& qm);

nlohmann::json ReportToJson(const QuantizedModel& qm,
                            const QuantizationReport& report);

}  // namespace microseg::quantization
