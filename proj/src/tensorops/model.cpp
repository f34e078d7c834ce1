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

#include "tensorops/model.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace microseg::tensorops {

using archgen::LayerGraph;
using archgen::LayerKind;
using archgen::LayerSpec;

namespace {

Shape4 WeightShape(const LayerSpec& l) {
  const int cin = l.in_shape.c;
  const int cout = l.out_shape.c;
  switch (l.kind) {
    case LayerKind::kConv3x3:
      return {3, 3, cin, cout};
    case LayerKind::kDepthwiseConv3x3:
      return {3, 3, cin, 1};
    case LayerKind::kPointwiseConv1x1:
    case LayerKind::kConv1x1Out:
      return {1, 1, cin, cout};
    case LayerKind::kTransposedConv2x2:
      return {2, 2, cout, cin};
    case LayerKind::kBatchNorm:
      return {1, 1, 1, cin};
    default:
      return {};
  }
}

int FanIn(const LayerSpec& l) {
  const Shape4 s = WeightShape(l);
  return s.n * s.h * s.w;
}

bool HasParams(LayerKind kind) {
  return archgen::HasWeights(kind) || kind == LayerKind::kBatchNorm;
}

std::vector<int> LastUse(const LayerGraph& g) {
  const int n = static_cast<int>(g.layers.size());
  std::vector<int> last(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    last[i] = std::max(last[i], i);
    if (g.layers[i].skip_source) {
      last[*g.layers[i].skip_source + 1] =
          std::max(last[*g.layers[i].skip_source + 1], i);
    }
  }
  last[n] = n;
  return last;
}

template <typename T>
Tensor<T> RunLayer(const LayerSpec& l, const LayerParams<T>& p,
                   const Tensor<T>& x, const Tensor<T>* skip, Mode mode,
                   std::vector<int64_t>* argmax, BatchNormCache<T>* bn) {
  switch (l.kind) {
    case LayerKind::kConv3x3:
    case LayerKind::kConv1x1Out:
      return Conv2dForward(x, p);
    case LayerKind::kPointwiseConv1x1:
      return PointwiseConvForward(x, p);
    case LayerKind::kDepthwiseConv3x3:
      return DepthwiseConvForward(x, p);
    case LayerKind::kBatchNorm:
      return mode == Mode::kTraining ? BatchNormTrainForward(x, p, bn)
                                     : BatchNormInferForward(x, p);
    case LayerKind::kRelu:
      return Relu(x);
    case LayerKind::kMaxPool2x2:
      return MaxPoolForward(x, argmax);
    case LayerKind::kTransposedConv2x2:
      return TransposedConvForward(x, p);
    case LayerKind::kConcat:
      return ConcatChannels(x, *skip);
    case LayerKind::kSigmoid:
      return Sigmoid(x);
  }
  Fail(ErrorKind::kShape, "unhandled layer kind");
}

template <typename T>
Tensor<T> RunGraph(const LayerGraph& g, const ModelParams<T>& params,
                   const Tensor<T>& x, Mode mode, ForwardCache<T>* cache,
                   size_t stop) {
  CheckParams(g, params);
  const archgen::Shape3& in = g.input_shape;
  Require(x.h() == in.h && x.w() == in.w && x.c() == in.c, ErrorKind::kShape,
          "model input " + x.shape().str() + " does not match graph input " +
              std::to_string(in.h) + "x" + std::to_string(in.w) + "x" +
              std::to_string(in.c));
  const size_t n = g.layers.size();
  const std::vector<int> last = LastUse(g);
  std::vector<Tensor<T>> outputs(n + 1);
  outputs[0] = x;
  if (cache) {
    cache->argmax.assign(n, {});
    cache->batch_norm.assign(n, {});
  }
  for (size_t i = 0; i < stop; ++i) {
    const LayerSpec& l = g.layers[i];
    const Tensor<T>* skip =
        l.skip_source ? &outputs[*l.skip_source + 1] : nullptr;
    std::vector<int64_t> local_argmax;
    outputs[i + 1] = RunLayer(
        l, params[i], outputs[i], skip, mode,
        cache ? &cache->argmax[i] : &local_argmax,
        cache ? &cache->batch_norm[i] : nullptr);
    if (!cache) {
      // Drop tensors whose last consumer has run.
      for (size_t t = 0; t <= i; ++t) {
        if (last[t] <= static_cast<int>(i) && !outputs[t].empty()) {
          outputs[t] = Tensor<T>();
        }
      }
    }
  }
  Tensor<T> result = outputs[stop];
  if (cache) cache->outputs = std::move(outputs);
  return result;
}

template <typename T>
void AddInto(Tensor<T>& acc, const Tensor<T>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  Require(acc.shape() == g.shape(), ErrorKind::kShape,
          "gradient accumulation shape mismatch");
  for (int64_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

}  // namespace

template <typename T>
ModelParams<T> ZeroParams(const LayerGraph& g) {
  ModelParams<T> params(g.layers.size());
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (!HasParams(l.kind)) continue;
    const Shape4 ws = WeightShape(l);
    if (l.kind == LayerKind::kBatchNorm) {
      params[i].weights = Tensor<T>(ws, T{1});
      params[i].bias.assign(l.in_shape.c, T{0});
      params[i].moving_mean.assign(l.in_shape.c, T{0});
      params[i].moving_var.assign(l.in_shape.c, T{1});
    } else {
      params[i].weights = Tensor<T>(ws, T{0});
      params[i].bias.assign(l.out_shape.c, T{0});
    }
  }
  return params;
}

ModelParams<float> InitParams(const LayerGraph& g, uint64_t seed) {
  ModelParams<float> params = ZeroParams<float>(g);
  CounterRng rng(seed);
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (!archgen::HasWeights(l.kind)) continue;
    const double limit = std::sqrt(6.0 / FanIn(l));
    for (float& w : params[i].weights.vec()) {
      w = static_cast<float>(rng.Uniform(-limit, limit));
    }
  }
  return params;
}

template <typename T>
void CheckParams(const LayerGraph& g, const ModelParams<T>& params) {
  Require(params.size() == g.layers.size(), ErrorKind::kShape,
          "parameter list has " + std::to_string(params.size()) +
              " entries for a graph of " + std::to_string(g.layers.size()) +
              " layers");
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const auto& p = params[i];
    const std::string where = "layer " + std::to_string(i) + " (" +
                              archgen::LayerKindName(l.kind) + ")";
    if (!HasParams(l.kind)) {
      Require(p.empty(), ErrorKind::kShape, where + " takes no parameters");
      continue;
    }
    Require(p.weights.shape() == WeightShape(l), ErrorKind::kShape,
            where + " weight shape " + p.weights.shape().str() +
                " does not match " + WeightShape(l).str());
    const size_t bias_len = l.kind == LayerKind::kBatchNorm ||
                                    l.kind == LayerKind::kDepthwiseConv3x3
                                ? l.in_shape.c
                                : l.out_shape.c;
    Require(p.bias.size() == bias_len, ErrorKind::kShape,
            where + " bias length mismatch");
    if (l.kind == LayerKind::kBatchNorm) {
      Require(p.moving_mean.size() == bias_len &&
                  p.moving_var.size() == bias_len,
              ErrorKind::kShape, where + " moving statistics length mismatch");
    }
  }
}

template <typename T>
Tensor<T> ModelForward(const LayerGraph& g, const ModelParams<T>& params,
                       const Tensor<T>& x, Mode mode, ForwardCache<T>* cache) {
  return RunGraph(g, params, x, mode, cache, g.layers.size());
}

template <typename T>
Tensor<T> ModelLogits(const LayerGraph& g, const ModelParams<T>& params,
                      const Tensor<T>& x) {
  size_t stop = g.layers.size();
  if (stop > 0 && g.layers.back().kind == LayerKind::kSigmoid) --stop;
  return RunGraph<T>(g, params, x, Mode::kInference, nullptr, stop);
}

template <typename T>
ModelGrads<T> ModelBackward(const LayerGraph& g, const ModelParams<T>& params,
                            const ForwardCache<T>& cache,
                            const Tensor<T>& dout) {
  const size_t n = g.layers.size();
  Require(cache.outputs.size() == n + 1 && cache.argmax.size() == n &&
              cache.batch_norm.size() == n,
          ErrorKind::kInvalidArgument,
          "backward pass needs a complete forward cache");
  Require(dout.shape() == cache.outputs[n].shape(), ErrorKind::kShape,
          "output gradient shape mismatch");
  ModelGrads<T> grads;
  grads.params = ZeroParams<T>(g);
  for (auto& p : grads.params) {
    p.moving_mean.clear();
    p.moving_var.clear();
  }
  // dtensor[t] accumulates dL/d(tensor t).
  std::vector<Tensor<T>> dtensor(n + 1);
  dtensor[n] = dout;
  for (size_t ii = n; ii-- > 0;) {
    const LayerSpec& l = g.layers[ii];
    const Tensor<T>& x = cache.outputs[ii];
    const Tensor<T>& y = cache.outputs[ii + 1];
    Tensor<T> dy = std::move(dtensor[ii + 1]);
    Require(!dy.empty(), ErrorKind::kInvalidArgument,
            "layer " + std::to_string(ii) + " output received no gradient");
    LayerGrads<T> lg;
    switch (l.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kConv1x1Out:
      case LayerKind::kPointwiseConv1x1:
        lg = Conv2dBackward(x, params[ii], dy);
        break;
      case LayerKind::kDepthwiseConv3x3:
        lg = DepthwiseConvBackward(x, params[ii], dy);
        break;
      case LayerKind::kTransposedConv2x2:
        lg = TransposedConvBackward(x, params[ii], dy);
        break;
      case LayerKind::kBatchNorm:
        lg = BatchNormBackward(cache.batch_norm[ii], params[ii], dy);
        break;
      case LayerKind::kRelu:
        lg.dx = ReluBackward(x, dy);
        break;
      case LayerKind::kSigmoid:
        lg.dx = SigmoidBackward(y, dy);
        break;
      case LayerKind::kMaxPool2x2:
        lg.dx = MaxPoolBackward(x.shape(), cache.argmax[ii], dy);
        break;
      case LayerKind::kConcat: {
        auto [da, db] = ConcatBackward(dy, x.c());
        lg.dx = std::move(da);
        AddInto(dtensor[*l.skip_source + 1], db);
        break;
      }
    }
    if (archgen::HasWeights(l.kind) || l.kind == LayerKind::kBatchNorm) {
      grads.params[ii].weights = std::move(lg.dweights);
      grads.params[ii].bias = std::move(lg.dbias);
    }
    AddInto(dtensor[ii], lg.dx);
  }
  grads.dx = std::move(dtensor[0]);
  return grads;
}

template ModelParams<float> ZeroParams(const LayerGraph&);
template ModelParams<double> ZeroParams(const LayerGraph&);
template void CheckParams(const LayerGraph&, const ModelParams<float>&);
template void CheckParams(const LayerGraph&, const ModelParams<double>&);
template Tensor<float> ModelForward(const LayerGraph&, const ModelParams<float>&,
                                    const Tensor<float>&, Mode,
                                    ForwardCache<float>*);
template Tensor<double> ModelForward(const LayerGraph&,
                                     const ModelParams<double>&,
                                     const Tensor<double>&, Mode,
                                     ForwardCache<double>*);
template Tensor<float> ModelLogits(const LayerGraph&, const ModelParams<float>&,
                                   const Tensor<float>&);
template Tensor<double> ModelLogits(const LayerGraph&,
                                    const ModelParams<double>&,
                                    const Tensor<double>&);
template ModelGrads<float> ModelBackward(const LayerGraph&,
                                         const ModelParams<float>&,
                                         const ForwardCache<float>&,
                                         const Tensor<float>&);
template ModelGrads<double> ModelBackward(const LayerGraph&,
                                          const ModelParams<double>&,
                                          const ForwardCache<double>&,
                                          const Tensor<double>&);

}  // namespace microseg::tensorops
