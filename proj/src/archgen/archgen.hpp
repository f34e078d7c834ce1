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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace microseg::archgen {

enum class ConvType { kStandard, kDepthwiseSeparable };

// One point of the U-Net reduction grid. The filter scale is stored as its
// denominator (1, 2, 4, 8 or 16) so that filter counts stay exact integers.
struct ArchConfig {
  int depth = 5;
  int scale_denominator = 1;
  ConvType conv_type = ConvType::kStandard;
  int input_h = 96;
  int input_w = 96;
  int input_c = 3;
  int base_filters = 64;

  int first_filters() const { return base_filters / scale_denominator; }
  double filter_scale() const { return 1.0 / scale_denominator; }

  bool operator==(const ArchConfig&) const = default;
};

// Throws Error(kInvalidArgument) if the config is outside the grid or the
// input size does not survive depth-1 poolings without truncation.
void Validate(const ArchConfig& config);

// Short identifier such as "d4_x1-4_dw" or "d5_x1_std".
std::string ConfigId(const ArchConfig& config);
// Inverse of ConfigId; input size and base filters take their defaults.
ArchConfig ParseConfigId(const std::string& id);

std::string ConvTypeName(ConvType t);  // "standard" | "depthwise"
ConvType ParseConvType(const std::string& name);
std::string ScaleName(int denominator);  // "x1", "x1/2", ...

// The 30 grid configurations: depth 5,4,3; within each depth Standard
// before DepthwiseSeparable; within each type scale x1 down to x1/16.
std::vector<ArchConfig> EnumerateGrid();

enum class LayerKind {
  kConv3x3,
  kDepthwiseConv3x3,
  kPointwiseConv1x1,
  kBatchNorm,
  kConv1x1Out,
  kRelu,
  kMaxPool2x2,
  kTransposedConv2x2,
  kConcat,
  kSigmoid,
};

std::string LayerKindName(LayerKind kind);
LayerKind ParseLayerKind(const std::string& name);

// True for layers that own weights and a bias vector.
bool HasWeights(LayerKind kind);
// True for element-wise layers that may reuse their input buffer.
bool IsElementwise(LayerKind kind);

struct Shape3 {
  int h = 0;
  int w = 0;
  int c = 0;

  int64_t elements() const { return int64_t{h} * w * c; }
  bool operator==(const Shape3&) const = default;
};

// Layer i reads the output of layer i-1 (the graph input for i == 0). Concat
// additionally reads the output of layer `skip_source`; the result is
// [previous ; skip] along channels.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  Shape3 in_shape;
  Shape3 out_shape;
  int filters = 0;
  std::optional<int> skip_source;
};

struct ParamBreakdown {
  int64_t weights = 0;
  int64_t biases = 0;
  // Batch-norm gamma, beta, moving mean and moving variance.
  int64_t norm = 0;

  int64_t total() const { return weights + biases + norm; }
};

struct LayerGraph {
  ArchConfig config;
  Shape3 input_shape;
  std::vector<LayerSpec> layers;
  int64_t param_count = 0;
  int64_t mac_count = 0;

  const Shape3& output_shape() const {
    return layers.empty() ? input_shape : layers.back().out_shape;
  }
};

// Output shape of `kind` applied to `in` (with `skip` for Concat). Throws
// Error(kShape) when the shapes are incompatible.
Shape3 InferOutputShape(LayerKind kind, const Shape3& in, int filters,
                        const Shape3* skip);

LayerGraph BuildGraph(const ArchConfig& config);

// Builds a graph from explicit layers, checking every shape law and filling
// the counts. Used for hand-built test graphs and for loading model files.
LayerGraph AssembleGraph(const ArchConfig& config, const Shape3& input_shape,
                         std::vector<LayerSpec> layers);

ParamBreakdown LayerParams(const LayerSpec& layer);
int64_t LayerMacs(const LayerSpec& layer);
int64_t CountParams(const LayerGraph& graph);
int64_t CountMacs(const LayerGraph& graph);

// Parameters in thousands rounded half-up to two decimals, as an integer
// number of hundredths (31,031,745 -> 3103175, i.e. 31,031.75 K).
int64_t ParamsHundredthsOfThousand(int64_t params);

struct LayerResource {
  int index = 0;
  LayerKind kind = LayerKind::kRelu;
  int64_t params = 0;
  int64_t macs = 0;
  int64_t output_bytes = 0;
  int64_t live_bytes = 0;
};

struct ResourceEstimate {
  int64_t params = 0;
  int64_t macs = 0;
  int64_t flash_bytes = 0;
  int64_t peak_activation_bytes = 0;
  int64_t largest_tensor_bytes = 0;
  std::vector<LayerResource> per_layer;
};

// weight_width 4 describes the float32 model file, 1 the int8 file (batch
// norm folded, int32 biases, per-channel scales). flash_bytes equals the
// exact size of the corresponding serialized model file.
ResourceEstimate EstimateResources(const LayerGraph& graph, int weight_width,
                                   int activation_width);

// Live activation elements at each execution step under a free-after-last-use
// schedule; element-wise layers run in place when their input dies with them.
std::vector<int64_t> LiveElementsPerStep(const LayerGraph& graph);

nlohmann::json ConfigToJson(const ArchConfig& config);
ArchConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json GraphToJson(const LayerGraph& graph);
LayerGraph GraphFromJson(const nlohmann::json& j);

}  // namespace microseg::archgen
