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

#include <algorithm>
#include <map>

#include "archgen/archgen.hpp"
#include "archgen/model_layout.hpp"
#include "common/error.hpp"

namespace microseg::archgen {

namespace {

// Buffer assignment for every tensor. Tensor 0 is the graph input, tensor
// i + 1 the output of layer i.
struct TensorPlan {
  std::vector<int> last_use;
  std::vector<int> buffer;
  std::vector<int64_t> buffer_elements;
};

TensorPlan PlanTensors(const LayerGraph& g) {
  const int n_layers = static_cast<int>(g.layers.size());
  TensorPlan plan;
  plan.last_use.assign(n_layers + 1, 0);
  for (int i = 0; i < n_layers; ++i) {
    plan.last_use[i] = std::max(plan.last_use[i], i);
    if (const auto& skip = g.layers[i].skip_source) {
      plan.last_use[*skip + 1] = std::max(plan.last_use[*skip + 1], i);
    }
  }
  // The model output stays live through the final step.
  plan.last_use[n_layers] = std::max(n_layers - 1, 0);

  plan.buffer.assign(n_layers + 1, 0);
  plan.buffer_elements.push_back(g.input_shape.elements());
  for (int i = 0; i < n_layers; ++i) {
    const auto& l = g.layers[i];
    if (IsElementwise(l.kind) && plan.last_use[i] == i) {
      plan.buffer[i + 1] = plan.buffer[i];
    } else {
      plan.buffer[i + 1] = static_cast<int>(plan.buffer_elements.size());
      plan.buffer_elements.push_back(l.out_shape.elements());
    }
  }
  return plan;
}

}  // namespace

std::vector<int64_t> LiveElementsPerStep(const LayerGraph& g) {
  const int n_layers = static_cast<int>(g.layers.size());
  if (n_layers == 0) return {g.input_shape.elements()};
  const TensorPlan plan = PlanTensors(g);
  std::vector<int64_t> live(n_layers, 0);
  for (int step = 0; step < n_layers; ++step) {
    std::vector<bool> counted(plan.buffer_elements.size(), false);
    for (int t = 0; t <= n_layers; ++t) {
      const int produced = t == 0 ? 0 : t - 1;
      if (produced <= step && step <= plan.last_use[t] &&
          !counted[plan.buffer[t]]) {
        counted[plan.buffer[t]] = true;
        live[step] += plan.buffer_elements[plan.buffer[t]];
      }
    }
  }
  return live;
}

ResourceEstimate EstimateResources(const LayerGraph& g, int weight_width,
                                   int activation_width) {
  Require(weight_width == 1 || weight_width == 4, ErrorKind::kInvalidArgument,
          "weight width must be 1 or 4 bytes");
  Require(activation_width == 1 || activation_width == 4,
          ErrorKind::kInvalidArgument, "activation width must be 1 or 4 bytes");
  ResourceEstimate est;
  est.params = CountParams(g);
  est.macs = CountMacs(g);
  est.flash_bytes = ModelFileSize(
      g, weight_width == 1 ? Precision::kInt8 : Precision::kFloat32);

  const std::vector<int64_t> live = LiveElementsPerStep(g);
  est.largest_tensor_bytes = g.input_shape.elements() * activation_width;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    LayerResource r;
    r.index = static_cast<int>(i);
    r.kind = l.kind;
    r.params = LayerParams(l).total();
    r.macs = LayerMacs(l);
    r.output_bytes = l.out_shape.elements() * activation_width;
    r.live_bytes = live[i] * activation_width;
    est.largest_tensor_bytes = std::max(est.largest_tensor_bytes, r.output_bytes);
    est.per_layer.push_back(r);
  }
  est.peak_activation_bytes =
      *std::max_element(live.begin(), live.end()) * activation_width;
  return est;
}

}  // namespace microseg::archgen
