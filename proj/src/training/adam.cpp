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

#include "training/adam.hpp"

#include <cmath>

#include "common/error.hpp"

namespace microseg::training {

template <typename T>
void AdamStep(tensorops::ModelParams<T>& params,
              const tensorops::ModelParams<T>& grads, AdamState& state,
              const AdamConfig& config) {
  Require(params.size() == grads.size(), ErrorKind::kShape,
          "gradient list does not match parameters");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const size_t n = params[i].weights.vec().size() + params[i].bias.size();
      state.m[i].assign(n, 0.0);
      state.v[i].assign(n, 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].weights.vec();
    auto& b = params[i].bias;
    const auto& gw = grads[i].weights.vec();
    const auto& gb = grads[i].bias;
    Require(gw.size() == w.size() && gb.size() == b.size(), ErrorKind::kShape,
            "gradient shape mismatch at layer " + std::to_string(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto update = [&](T& p, double g, size_t k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p = static_cast<T>(p - config.learning_rate * mhat /
                                 (std::sqrt(vhat) + config.epsilon));
    };
    for (size_t k = 0; k < w.size(); ++k) update(w[k], gw[k], k);
    for (size_t k = 0; k < b.size(); ++k) update(b[k], gb[k], w.size() + k);
  }
}

template void AdamStep(tensorops::ModelParams<float>&,
                       const tensorops::ModelParams<float>&, AdamState&,
                       const AdamConfig&);
template void AdamStep(tensorops::ModelParams<double>&,
                       const tensorops::ModelParams<double>&, AdamState&,
                       const AdamConfig&);

}  // namespace microseg::training
