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

#include "tensorops/tensor.hpp"

namespace microseg::training {

struct TverskyParams {
  double alpha = 0.3;  // false-positive weight
  double beta = 0.7;   // false-negative weight
  double gamma = 4.0 / 3.0;
  double epsilon = 1e-6;
};

void Validate(const TverskyParams& tp);

struct SoftCounts {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

// (1 - (TP + eps) / (TP + alpha FP + beta FN + eps))^gamma for one sample.
// Accepts eps >= 0; the ratio is taken as 1 when both sides vanish.
double FocalTverskyFromCounts(const SoftCounts& c, const TverskyParams& tp);

template <typename T>
struct LossResult {
  double loss = 0.0;
  tensorops::Tensor<T> grad;  // dL/dprobs
};

// Soft counts per batch item, per-item losses averaged over the batch, and
// the gradient of that mean with respect to every probability. The mask must
// be exactly 0 or 1 everywhere.
template <typename T>
LossResult<T> FocalTverskyLoss(const tensorops::Tensor<T>& probs,
                               const tensorops::Tensor<T>& mask,
                               const TverskyParams& tp);

}  // namespace microseg::training
