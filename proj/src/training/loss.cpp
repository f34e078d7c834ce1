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

#include "training/loss.hpp"

#include <cmath>

#include "common/error.hpp"

namespace microseg::training {

using tensorops::Tensor;

void Validate(const TverskyParams& tp) {
  Require(tp.alpha > 0 && tp.beta > 0 && tp.gamma > 0 && tp.epsilon > 0,
          ErrorKind::kInvalidArgument,
          "Tversky alpha, beta, gamma and epsilon must all be positive");
}

double FocalTverskyFromCounts(const SoftCounts& c, const TverskyParams& tp) {
  const double num = c.tp + tp.epsilon;
  const double den = c.tp + tp.alpha * c.fp + tp.beta * c.fn + tp.epsilon;
  const double index = den > 0.0 ? num / den : 1.0;
  return std::pow(std::max(0.0, 1.0 - index), tp.gamma);
}

template <typename T>
LossResult<T> FocalTverskyLoss(const Tensor<T>& probs, const Tensor<T>& mask,
                               const TverskyParams& tp) {
  Validate(tp);
  Require(probs.shape() == mask.shape(), ErrorKind::kShape,
          "probability and mask shapes differ: " + probs.shape().str() +
              " vs " + mask.shape().str());
  for (int64_t i = 0; i < mask.size(); ++i) {
    Require(mask[i] == T{0} || mask[i] == T{1}, ErrorKind::kInvalidArgument,
            "mask must be binary");
  }
  LossResult<T> out;
  out.grad = Tensor<T>(probs.shape());
  const int batch = probs.n();
  const int64_t per = probs.size() / batch;
  for (int n = 0; n < batch; ++n) {
    const int64_t base = n * per;
    SoftCounts c;
    for (int64_t i = 0; i < per; ++i) {
      const double p = probs[base + i];
      const double g = mask[base + i];
      c.tp += p * g;
      c.fp += p * (1.0 - g);
      c.fn += (1.0 - p) * g;
    }
    const double num = c.tp + tp.epsilon;
    const double den = c.tp + tp.alpha * c.fp + tp.beta * c.fn + tp.epsilon;
    const double index = num / den;
    const double one_minus = std::max(0.0, 1.0 - index);
    out.loss += std::pow(one_minus, tp.gamma) / batch;

    // dL/dindex = -gamma (1 - index)^(gamma - 1), zero at a perfect match.
    const double dl_dindex =
        one_minus > 0.0 ? -tp.gamma * std::pow(one_minus, tp.gamma - 1.0) : 0.0;
    const double den2 = den * den;
    const double d_tp = (den - num) / den2;
    const double d_fp = -num * tp.alpha / den2;
    const double d_fn = -num * tp.beta / den2;
    const double scale = dl_dindex / batch;
    for (int64_t i = 0; i < per; ++i) {
      const double g = mask[base + i];
      // dTP/dp = g, dFP/dp = 1 - g, dFN/dp = -g.
      const double d_index = d_tp * g + d_fp * (1.0 - g) - d_fn * g;
      out.grad[base + i] = static_cast<T>(scale * d_index);
    }
  }
  return out;
}

template LossResult<float> FocalTverskyLoss(const Tensor<float>&,
                                            const Tensor<float>&,
                                            const TverskyParams&);
template LossResult<double> FocalTverskyLoss(const Tensor<double>&,
                                             const Tensor<double>&,
                                             const TverskyParams&);

}  // namespace microseg::training
