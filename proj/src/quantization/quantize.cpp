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

#include "quantization/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/error.hpp"
#include "tensorops/kernels.hpp"

namespace microseg::quantization {

using archgen::LayerGraph;
using archgen::LayerKind;
using archgen::LayerSpec;
using tensorops::ModelParams;
using tensorops::Shape4;
using tensorops::Tensor;

std::vector<Range> Calibrate(const LayerGraph& g, const ModelParams<float>& params,
                             const std::vector<const Tensor<float>*>& rep) {
  Require(!rep.empty(), ErrorKind::kEmpty, "calibration needs at least one input");
  std::vector<Range> ranges(g.layers.size() + 1);
  for (const Tensor<float>* x : rep) {
    tensorops::ForwardCache<float> cache;
    tensorops::ModelForward(g, params, *x, tensorops::Mode::kInference, &cache);
    for (size_t e = 0; e < ranges.size(); ++e) {
      for (float v : cache.outputs[e].vec()) {
        ranges[e].min = std::min(ranges[e].min, v);
        ranges[e].max = std::max(ranges[e].max, v);
      }
    }
  }
  return ranges;
}

QuantParams ChooseActivationParams(const Range& r, bool* degenerate) {
  const double lo = std::min(0.0, static_cast<double>(r.min));
  const double hi = std::max(0.0, static_cast<double>(r.max));
  double scale = (hi - lo) / 255.0;
  const bool degen = !(scale >= kMinScale);
  if (degen) scale = kMinScale;
  if (degenerate) *degenerate = degen;
  QuantParams qp;
  qp.scale = static_cast<float>(scale);
  const double zp = std::nearbyint(-lo / qp.scale) - 128.0;
  qp.zero_point = static_cast<int32_t>(std::clamp(zp, -128.0, 127.0));
  return qp;
}

Tensor<int8_t> QuantizeTensor(const Tensor<float>& x, const QuantParams& qp) {
  Tensor<int8_t> q(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) q[i] = QuantizeValue(x[i], qp);
  return q;
}

Tensor<float> DequantizeTensor(const Tensor<int8_t>& q, const QuantParams& qp) {
  Tensor<float> x(q.shape());
  for (int64_t i = 0; i < q.size(); ++i) x[i] = DequantizeValue(q[i], qp);
  return x;
}

namespace {

// Output channel owning flat weight index k.
int OutChannel(const LayerSpec& l, int64_t k) {
  const int cin = l.in_shape.c;
  const int cout = l.out_shape.c;
  switch (l.kind) {
    case LayerKind::kDepthwiseConv3x3:
      return static_cast<int>(k % cin);
    case LayerKind::kTransposedConv2x2:
      return static_cast<int>((k / cin) % cout);
    default:
      return static_cast<int>(k % cout);
  }
}

int OutChannels(const LayerSpec& l) {
  return l.kind == LayerKind::kDepthwiseConv3x3 ? l.in_shape.c : l.out_shape.c;
}

int8_t ClampI8(double v) {
  return static_cast<int8_t>(std::clamp(v, -128.0, 127.0));
}

int8_t Requantize(int64_t acc, double multiplier, int32_t zp_out) {
  return ClampI8(std::nearbyint(static_cast<double>(acc) * multiplier) + zp_out);
}

struct QTensor {
  Tensor<int8_t> q;
  QuantParams qp;
};

Tensor<int8_t> QConv(const LayerSpec& l, const QuantizedLayer& ql,
                     const Tensor<int8_t>& x, const QuantParams& in,
                     const QuantParams& out) {
  const int cin = l.in_shape.c;
  const int cout = l.out_shape.c;
  const int k = l.kind == LayerKind::kConv3x3 ? 3 : 1;
  const int pad = k / 2;
  Tensor<int8_t> y(Shape4{x.n(), x.h(), x.w(), cout});
  std::vector<double> mult(cout);
  for (int c = 0; c < cout; ++c) {
    mult[c] = static_cast<double>(in.scale) * ql.weight_scale[c] / out.scale;
  }
  std::vector<int32_t> acc(cout);
  for (int n = 0; n < x.n(); ++n) {
    for (int h = 0; h < x.h(); ++h) {
      for (int w = 0; w < x.w(); ++w) {
        std::copy(ql.bias.begin(), ql.bias.end(), acc.begin());
        for (int kh = 0; kh < k; ++kh) {
          const int ih = h + kh - pad;
          if (ih < 0 || ih >= x.h()) continue;
          for (int kw = 0; kw < k; ++kw) {
            const int iw = w + kw - pad;
            if (iw < 0 || iw >= x.w()) continue;
            const int8_t* xp = &x[x.index(n, ih, iw, 0)];
            const int8_t* wp = &ql.weights[static_cast<size_t>(kh * k + kw) * cin * cout];
            for (int ci = 0; ci < cin; ++ci) {
              const int32_t xv = static_cast<int32_t>(xp[ci]) - in.zero_point;
              const int8_t* wr = wp + static_cast<size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) acc[co] += xv * wr[co];
            }
          }
        }
        int8_t* yp = &y[y.index(n, h, w, 0)];
        for (int co = 0; co < cout; ++co) {
          yp[co] = Requantize(acc[co], mult[co], out.zero_point);
        }
      }
    }
  }
  return y;
}

Tensor<int8_t> QDepthwise(const QuantizedLayer& ql, const Tensor<int8_t>& x,
                          const QuantParams& in, const QuantParams& out) {
  const int ch = x.c();
  Tensor<int8_t> y(x.shape());
  std::vector<double> mult(ch);
  for (int c = 0; c < ch; ++c) {
    mult[c] = static_cast<double>(in.scale) * ql.weight_scale[c] / out.scale;
  }
  for (int n = 0; n < x.n(); ++n) {
    for (int h = 0; h < x.h(); ++h) {
      for (int w = 0; w < x.w(); ++w) {
        for (int c = 0; c < ch; ++c) {
          int32_t acc = ql.bias[c];
          for (int kh = 0; kh < 3; ++kh) {
            const int ih = h + kh - 1;
            if (ih < 0 || ih >= x.h()) continue;
            for (int kw = 0; kw < 3; ++kw) {
              const int iw = w + kw - 1;
              if (iw < 0 || iw >= x.w()) continue;
              acc += (static_cast<int32_t>(x.at(n, ih, iw, c)) - in.zero_point) *
                     ql.weights[static_cast<size_t>(kh * 3 + kw) * ch + c];
            }
          }
          y.at(n, h, w, c) = Requantize(acc, mult[c], out.zero_point);
        }
      }
    }
  }
  return y;
}

Tensor<int8_t> QTransposed(const LayerSpec& l, const QuantizedLayer& ql,
                           const Tensor<int8_t>& x, const QuantParams& in,
                           const QuantParams& out) {
  const int cin = l.in_shape.c;
  const int cout = l.out_shape.c;
  Tensor<int8_t> y(Shape4{x.n(), x.h() * 2, x.w() * 2, cout});
  std::vector<double> mult(cout);
  for (int c = 0; c < cout; ++c) {
    mult[c] = static_cast<double>(in.scale) * ql.weight_scale[c] / out.scale;
  }
  std::vector<int32_t> xv(cin);
  for (int n = 0; n < x.n(); ++n) {
    for (int h = 0; h < x.h(); ++h) {
      for (int w = 0; w < x.w(); ++w) {
        for (int ci = 0; ci < cin; ++ci) {
          xv[ci] = static_cast<int32_t>(x.at(n, h, w, ci)) - in.zero_point;
        }
        for (int kh = 0; kh < 2; ++kh) {
          for (int kw = 0; kw < 2; ++kw) {
            for (int co = 0; co < cout; ++co) {
              int32_t acc = ql.bias[co];
              const int8_t* wp =
                  &ql.weights[(static_cast<size_t>(kh * 2 + kw) * cout + co) * cin];
              for (int ci = 0; ci < cin; ++ci) acc += xv[ci] * wp[ci];
              y.at(n, 2 * h + kh, 2 * w + kw, co) =
                  Requantize(acc, mult[co], out.zero_point);
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor<int8_t> Rescale(const Tensor<int8_t>& x, const QuantParams& in,
                       const QuantParams& out, bool relu) {
  Tensor<int8_t> y(x.shape());
  const double m = static_cast<double>(in.scale) / out.scale;
  for (int64_t i = 0; i < x.size(); ++i) {
    int32_t v = static_cast<int32_t>(x[i]) - in.zero_point;
    if (relu) v = std::max(v, 0);
    y[i] = Requantize(v, m, out.zero_point);
  }
  return y;
}

Tensor<int8_t> QMaxPool(const Tensor<int8_t>& x) {
  Require(x.h() % 2 == 0 && x.w() % 2 == 0, ErrorKind::kShape,
          "max pool needs even spatial dims");
  Tensor<int8_t> y(Shape4{x.n(), x.h() / 2, x.w() / 2, x.c()});
  for (int n = 0; n < x.n(); ++n) {
    for (int h = 0; h < y.h(); ++h) {
      for (int w = 0; w < y.w(); ++w) {
        for (int c = 0; c < x.c(); ++c) {
          int8_t m = x.at(n, 2 * h, 2 * w, c);
          m = std::max(m, x.at(n, 2 * h, 2 * w + 1, c));
          m = std::max(m, x.at(n, 2 * h + 1, 2 * w, c));
          m = std::max(m, x.at(n, 2 * h + 1, 2 * w + 1, c));
          y.at(n, h, w, c) = m;
        }
      }
    }
  }
  return y;
}

bool FoldsIntoPrevious(const LayerGraph& g, size_t i) {
  return g.layers[i].kind == LayerKind::kBatchNorm;
}

}  // namespace

QuantizedModel QuantizeModel(const LayerGraph& g, const ModelParams<float>& params,
                             const std::vector<Range>& ranges,
                             QuantizationReport* report) {
  tensorops::CheckParams(g, params);
  const size_t n = g.layers.size();
  Require(ranges.size() == n + 1, ErrorKind::kShape,
          "need one calibration range per activation edge");

  // Float weights and biases with batch norm folded in.
  std::vector<std::vector<double>> w(n), b(n);
  for (size_t i = 0; i < n; ++i) {
    if (!archgen::HasWeights(g.layers[i].kind)) continue;
    w[i].assign(params[i].weights.vec().begin(), params[i].weights.vec().end());
    b[i].assign(params[i].bias.begin(), params[i].bias.end());
  }
  for (size_t i = 0; i < n; ++i) {
    if (!FoldsIntoPrevious(g, i)) continue;
    Require(i > 0 && archgen::HasWeights(g.layers[i - 1].kind), ErrorKind::kShape,
            "batch norm at layer " + std::to_string(i) +
                " does not follow a weighted layer and cannot be folded");
    const auto& bn = params[i];
    const LayerSpec& prev = g.layers[i - 1];
    const int ch = g.layers[i].in_shape.c;
    std::vector<double> scale(ch), shift(ch);
    for (int c = 0; c < ch; ++c) {
      scale[c] = bn.weights[c] /
                 std::sqrt(static_cast<double>(bn.moving_var[c]) +
                           tensorops::kBatchNormEpsilon);
      shift[c] = bn.bias[c] - bn.moving_mean[c] * scale[c];
    }
    for (size_t k = 0; k < w[i - 1].size(); ++k) {
      w[i - 1][k] *= scale[OutChannel(prev, static_cast<int64_t>(k))];
    }
    for (int c = 0; c < ch; ++c) b[i - 1][c] = b[i - 1][c] * scale[c] + shift[c];
  }

  QuantizedModel qm;
  qm.graph = g;
  qm.layers.resize(n);
  qm.activations.resize(n + 1);
  std::vector<char> degen(n + 1, 0);
  auto choose = [&](size_t edge, const Range& r) {
    bool d = false;
    qm.activations[edge] = ChooseActivationParams(r, &d);
    degen[edge] = d ? 1 : 0;
  };
  choose(0, ranges[0]);
  for (size_t i = 0; i < n; ++i) {
    const LayerKind kind = g.layers[i].kind;
    const size_t out = i + 1;
    if (kind == LayerKind::kMaxPool2x2 || kind == LayerKind::kConcat ||
        kind == LayerKind::kBatchNorm) {
      qm.activations[out] = qm.activations[i];
      degen[out] = degen[i];
    } else if (archgen::HasWeights(kind) && i + 1 < n && FoldsIntoPrevious(g, i + 1)) {
      choose(out, ranges[i + 2]);
    } else if (kind == LayerKind::kSigmoid) {
      qm.activations[out] = QuantParams{1.0f / 255.0f, -128};
    } else {
      choose(out, ranges[out]);
    }
  }

  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = g.layers[i];
    if (!archgen::HasWeights(l.kind)) continue;
    QuantizedLayer& ql = qm.layers[i];
    const int oc = OutChannels(l);
    std::vector<double> max_abs(oc, 0.0);
    for (size_t k = 0; k < w[i].size(); ++k) {
      const int c = OutChannel(l, static_cast<int64_t>(k));
      max_abs[c] = std::max(max_abs[c], std::fabs(w[i][k]));
    }
    ql.weight_scale.resize(oc);
    for (int c = 0; c < oc; ++c) {
      ql.weight_scale[c] =
          max_abs[c] > 0.0 ? static_cast<float>(max_abs[c] / 127.0) : 1.0f;
    }
    ql.weights.resize(w[i].size());
    for (size_t k = 0; k < w[i].size(); ++k) {
      const int c = OutChannel(l, static_cast<int64_t>(k));
      const double q = std::nearbyint(w[i][k] / ql.weight_scale[c]);
      ql.weights[k] = static_cast<int8_t>(std::clamp(q, -127.0, 127.0));
    }
    const double in_scale = qm.activations[i].scale;
    ql.bias.resize(oc);
    for (int c = 0; c < oc; ++c) {
      const double q = std::nearbyint(b[i][c] / (in_scale * ql.weight_scale[c]));
      ql.bias[c] = static_cast<int32_t>(
          std::clamp(q, static_cast<double>(std::numeric_limits<int32_t>::min()),
                     static_cast<double>(std::numeric_limits<int32_t>::max())));
    }
  }

  if (report) {
    report->edges.clear();
    report->degenerate_edges = 0;
    for (size_t e = 0; e <= n; ++e) {
      report->edges.push_back({static_cast<int>(e), ranges[e], qm.activations[e],
                               degen[e] != 0});
      report->degenerate_edges += degen[e];
    }
  }
  return qm;
}

void CheckQuantizedModel(const QuantizedModel& qm) {
  const LayerGraph& g = qm.graph;
  const size_t n = g.layers.size();
  Require(qm.layers.size() == n, ErrorKind::kShape,
          "quantized model needs one entry per layer");
  Require(qm.activations.size() == n + 1, ErrorKind::kShape,
          "quantized model is missing activation parameters");
  for (const auto& qp : qm.activations) {
    Require(qp.scale > 0.0f && std::isfinite(qp.scale) && qp.zero_point >= -128 &&
                qp.zero_point <= 127,
            ErrorKind::kShape, "invalid activation quantization parameters");
  }
  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = g.layers[i];
    const QuantizedLayer& ql = qm.layers[i];
    if (!archgen::HasWeights(l.kind)) {
      Require(ql.weights.empty() && ql.bias.empty() && ql.weight_scale.empty(),
              ErrorKind::kShape, "layer " + std::to_string(i) + " takes no weights");
      continue;
    }
    const archgen::ParamBreakdown pb = archgen::LayerParams(l);
    Require(static_cast<int64_t>(ql.weights.size()) == pb.weights &&
                static_cast<int64_t>(ql.bias.size()) == pb.biases &&
                ql.weight_scale.size() == ql.bias.size(),
            ErrorKind::kShape,
            "quantized layer " + std::to_string(i) + " has the wrong size");
  }
}

namespace {

Tensor<int8_t> RunQuantized(const QuantizedModel& qm, const Tensor<float>& x,
                            size_t stop) {
  CheckQuantizedModel(qm);
  const LayerGraph& g = qm.graph;
  Require(x.h() == g.input_shape.h && x.w() == g.input_shape.w &&
              x.c() == g.input_shape.c,
          ErrorKind::kShape, "model input " + x.shape().str() +
                                 " does not match the graph input");
  std::vector<Tensor<int8_t>> edges(g.layers.size() + 1);
  edges[0] = QuantizeTensor(x, qm.activations[0]);
  for (size_t i = 0; i < stop; ++i) {
    const LayerSpec& l = g.layers[i];
    const QuantParams& in = qm.activations[i];
    const QuantParams& out = qm.activations[i + 1];
    const Tensor<int8_t>& xi = edges[i];
    switch (l.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kPointwiseConv1x1:
      case LayerKind::kConv1x1Out:
        edges[i + 1] = QConv(l, qm.layers[i], xi, in, out);
        break;
      case LayerKind::kDepthwiseConv3x3:
        edges[i + 1] = QDepthwise(qm.layers[i], xi, in, out);
        break;
      case LayerKind::kTransposedConv2x2:
        edges[i + 1] = QTransposed(l, qm.layers[i], xi, in, out);
        break;
      case LayerKind::kBatchNorm:
        edges[i + 1] = xi;
        break;
      case LayerKind::kRelu:
        edges[i + 1] = Rescale(xi, in, out, true);
        break;
      case LayerKind::kMaxPool2x2:
        edges[i + 1] = QMaxPool(xi);
        break;
      case LayerKind::kConcat: {
        const size_t s = static_cast<size_t>(*l.skip_source) + 1;
        const Tensor<int8_t> skip = qm.activations[s] == out
                                        ? edges[s]
                                        : Rescale(edges[s], qm.activations[s], out, false);
        edges[i + 1] = tensorops::ConcatChannels(xi, skip);
        break;
      }
      case LayerKind::kSigmoid: {
        Tensor<float> f = DequantizeTensor(xi, in);
        edges[i + 1] = QuantizeTensor(tensorops::Sigmoid(f), out);
        break;
      }
    }
  }
  return edges[stop];
}

size_t LogitStop(const LayerGraph& g) {
  size_t stop = g.layers.size();
  if (stop > 0 && g.layers.back().kind == LayerKind::kSigmoid) --stop;
  return stop;
}

}  // namespace

Tensor<float> QuantizedLogits(const QuantizedModel& qm, const Tensor<float>& x) {
  const size_t stop = LogitStop(qm.graph);
  return DequantizeTensor(RunQuantized(qm, x, stop), qm.activations[stop]);
}

Tensor<float> QuantizedForward(const QuantizedModel& qm, const Tensor<float>& x) {
  Tensor<float> logits = QuantizedLogits(qm, x);
  if (LogitStop(qm.graph) < qm.graph.layers.size()) return tensorops::Sigmoid(logits);
  return logits;
}

nlohmann::json ReportToJson(const QuantizedModel& qm, const QuantizationReport& report) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : report.edges) {
    const bool input = e.edge == 0;
    const auto& l = input ? archgen::LayerSpec{} : qm.graph.layers[e.edge - 1];
    edges.push_back({{"edge", e.edge},
                     {"producer", input ? "input" : archgen::LayerKindName(l.kind)},
                     {"min", e.range.min},
                     {"max", e.range.max},
                     {"scale", e.params.scale},
                     {"zero_point", e.params.zero_point},
                     {"degenerate", e.degenerate}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < qm.graph.layers.size(); ++i) {
    const auto& ql = qm.layers[i];
    if (ql.weight_scale.empty()) continue;
    layers.push_back({{"layer", i},
                      {"kind", archgen::LayerKindName(qm.graph.layers[i].kind)},
                      {"input_scale", qm.activations[i].scale},
                      {"output_scale", qm.activations[i + 1].scale},
                      {"weight_scale", ql.weight_scale}});
  }
  return {{"edges", edges},
          {"layers", layers},
          {"degenerate_edges", report.degenerate_edges}};
}

}  // namespace microseg::quantization
