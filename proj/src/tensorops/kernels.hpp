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

// Forward and backward kernels for every layer kind. All kernels are
// templates over the scalar type: float for training and inference, double
// for gradient verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "common/error.hpp"
#include "tensorops/tensor.hpp"

namespace microseg::tensorops {

// Optional multiply-accumulate counter. Kernels add the nominal MAC count of
// every output element (padding taps included) while a scope is active.
inline thread_local int64_t* tls_mac_counter = nullptr;

class MacCounterScope {
 public:
  MacCounterScope() : previous_(tls_mac_counter) { tls_mac_counter = &count_; }
  ~MacCounterScope() { tls_mac_counter = previous_; }
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

  int64_t count() const { return count_; }

 private:
  int64_t count_ = 0;
  int64_t* previous_;
};

namespace detail {
inline void AddMacs(int64_t n) {
  if (tls_mac_counter != nullptr) *tls_mac_counter += n;
}
}  // namespace detail

// Weight layouts:
//   conv k x k       (k, k, Cin, Cout)
//   depthwise 3x3    (3, 3, C, 1)
//   pointwise 1x1    (1, 1, Cin, Cout)
//   transposed 2x2   (2, 2, Cout, Cin)
// Batch norm keeps gamma in `weights` as (1, 1, 1, C) and beta in `bias`.
template <typename T>
struct LayerParams {
  Tensor<T> weights;
  std::vector<T> bias;
  std::vector<T> moving_mean;
  std::vector<T> moving_var;

  bool empty() const { return weights.empty() && bias.empty(); }
};

template <typename T>
struct LayerGrads {
  Tensor<T> dx;
  Tensor<T> dweights;
  std::vector<T> dbias;
};

// ---------------------------------------------------------------------------
// Standard convolution, stride 1, same padding (implicit zero border).

template <typename T>
Tensor<T> Conv2dForward(const Tensor<T>& x, const LayerParams<T>& p) {
  const Shape4& ws = p.weights.shape();
  const int k = ws.n;
  Require(ws.h == k && (k % 2) == 1, ErrorKind::kShape,
          "conv kernel must be square and odd");
  Require(ws.w == x.c(), ErrorKind::kShape,
          "conv weight Cin " + std::to_string(ws.w) + " != input C " +
              std::to_string(x.c()));
  const int cin = x.c();
  const int cout = ws.c;
  Require(static_cast<int>(p.bias.size()) == cout, ErrorKind::kShape,
          "conv bias length mismatch");
  const int pad = k / 2;
  Tensor<T> y({x.n(), x.h(), x.w(), cout});
  const T* wd = p.weights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int oh = 0; oh < x.h(); ++oh) {
      for (int ow = 0; ow < x.w(); ++ow) {
        T* out = &y.at(n, oh, ow, 0);
        for (int co = 0; co < cout; ++co) out[co] = p.bias[co];
        for (int ky = 0; ky < k; ++ky) {
          const int ih = oh + ky - pad;
          if (ih < 0 || ih >= x.h()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int iw = ow + kx - pad;
            if (iw < 0 || iw >= x.w()) continue;
            const T* in = &x.at(n, ih, iw, 0);
            const T* wk = wd + (int64_t{ky} * k + kx) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const T v = in[ci];
              const T* wrow = wk + int64_t{ci} * cout;
              for (int co = 0; co < cout; ++co) out[co] += v * wrow[co];
            }
          }
        }
      }
    }
  }
  detail::AddMacs(y.size() / cout * int64_t{k} * k * cin * cout);
  return y;
}

template <typename T>
LayerGrads<T> Conv2dBackward(const Tensor<T>& x, const LayerParams<T>& p,
                             const Tensor<T>& dy) {
  const Shape4& ws = p.weights.shape();
  const int k = ws.n;
  const int cin = x.c();
  const int cout = ws.c;
  Require(dy.shape() == Shape4{x.n(), x.h(), x.w(), cout}, ErrorKind::kShape,
          "conv upstream gradient shape mismatch");
  const int pad = k / 2;
  LayerGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(ws),
                  std::vector<T>(cout, T{0})};
  const T* wd = p.weights.ptr();
  T* dwd = g.dweights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int oh = 0; oh < x.h(); ++oh) {
      for (int ow = 0; ow < x.w(); ++ow) {
        const T* go = &dy.at(n, oh, ow, 0);
        for (int co = 0; co < cout; ++co) g.dbias[co] += go[co];
        for (int ky = 0; ky < k; ++ky) {
          const int ih = oh + ky - pad;
          if (ih < 0 || ih >= x.h()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int iw = ow + kx - pad;
            if (iw < 0 || iw >= x.w()) continue;
            const T* in = &x.at(n, ih, iw, 0);
            T* din = &g.dx.at(n, ih, iw, 0);
            const int64_t off = (int64_t{ky} * k + kx) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const T* wrow = wd + off + int64_t{ci} * cout;
              T* dwrow = dwd + off + int64_t{ci} * cout;
              const T v = in[ci];
              T acc{0};
              for (int co = 0; co < cout; ++co) {
                acc += go[co] * wrow[co];
                dwrow[co] += v * go[co];
              }
              din[ci] += acc;
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Depthwise 3x3: output channel c reads only input channel c.

template <typename T>
Tensor<T> DepthwiseConvForward(const Tensor<T>& x, const LayerParams<T>& p) {
  const Shape4& ws = p.weights.shape();
  Require(ws == Shape4{3, 3, x.c(), 1}, ErrorKind::kShape,
          "depthwise weight must be (3,3,C,1) with C = input channels");
  Require(static_cast<int>(p.bias.size()) == x.c(), ErrorKind::kShape,
          "depthwise bias length mismatch");
  const int ch = x.c();
  Tensor<T> y(x.shape());
  const T* wd = p.weights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int oh = 0; oh < x.h(); ++oh) {
      for (int ow = 0; ow < x.w(); ++ow) {
        T* out = &y.at(n, oh, ow, 0);
        for (int c = 0; c < ch; ++c) out[c] = p.bias[c];
        for (int ky = 0; ky < 3; ++ky) {
          const int ih = oh + ky - 1;
          if (ih < 0 || ih >= x.h()) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int iw = ow + kx - 1;
            if (iw < 0 || iw >= x.w()) continue;
            const T* in = &x.at(n, ih, iw, 0);
            const T* wk = wd + (ky * 3 + kx) * ch;
            for (int c = 0; c < ch; ++c) out[c] += in[c] * wk[c];
          }
        }
      }
    }
  }
  detail::AddMacs(y.size() * 9);
  return y;
}

template <typename T>
LayerGrads<T> DepthwiseConvBackward(const Tensor<T>& x,
                                    const LayerParams<T>& p,
                                    const Tensor<T>& dy) {
  Require(dy.shape() == x.shape(), ErrorKind::kShape,
          "depthwise upstream gradient shape mismatch");
  const int ch = x.c();
  LayerGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(p.weights.shape()),
                  std::vector<T>(ch, T{0})};
  const T* wd = p.weights.ptr();
  T* dwd = g.dweights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int oh = 0; oh < x.h(); ++oh) {
      for (int ow = 0; ow < x.w(); ++ow) {
        const T* go = &dy.at(n, oh, ow, 0);
        for (int c = 0; c < ch; ++c) g.dbias[c] += go[c];
        for (int ky = 0; ky < 3; ++ky) {
          const int ih = oh + ky - 1;
          if (ih < 0 || ih >= x.h()) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int iw = ow + kx - 1;
            if (iw < 0 || iw >= x.w()) continue;
            const T* in = &x.at(n, ih, iw, 0);
            T* din = &g.dx.at(n, ih, iw, 0);
            const int off = (ky * 3 + kx) * ch;
            for (int c = 0; c < ch; ++c) {
              din[c] += go[c] * wd[off + c];
              dwd[off + c] += in[c] * go[c];
            }
          }
        }
      }
    }
  }
  return g;
}

// Pointwise 1x1 is the k = 1 case of Conv2dForward.
template <typename T>
Tensor<T> PointwiseConvForward(const Tensor<T>& x, const LayerParams<T>& p) {
  Require(p.weights.n() == 1 && p.weights.h() == 1, ErrorKind::kShape,
          "pointwise weight must be (1,1,Cin,Cout)");
  return Conv2dForward(x, p);
}

template <typename T>
LayerGrads<T> PointwiseConvBackward(const Tensor<T>& x,
                                    const LayerParams<T>& p,
                                    const Tensor<T>& dy) {
  return Conv2dBackward(x, p, dy);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. `argmax` holds the flat input index of each
// window's winner (first maximum in row-major window order).

template <typename T>
Tensor<T> MaxPoolForward(const Tensor<T>& x, std::vector<int64_t>* argmax) {
  Require(x.h() % 2 == 0 && x.w() % 2 == 0, ErrorKind::kShape,
          "max pooling needs even H and W, got " + x.shape().str());
  Tensor<T> y({x.n(), x.h() / 2, x.w() / 2, x.c()});
  if (argmax) argmax->assign(static_cast<size_t>(y.size()), 0);
  for (int n = 0; n < y.n(); ++n) {
    for (int oh = 0; oh < y.h(); ++oh) {
      for (int ow = 0; ow < y.w(); ++ow) {
        for (int c = 0; c < y.c(); ++c) {
          int64_t best = x.index(n, 2 * oh, 2 * ow, c);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int64_t i = x.index(n, 2 * oh + dy, 2 * ow + dx, c);
              if (x[i] > x[best]) best = i;
            }
          }
          const int64_t o = y.index(n, oh, ow, c);
          y[o] = x[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPoolBackward(const Shape4& in_shape,
                          const std::vector<int64_t>& argmax,
                          const Tensor<T>& dy) {
  Require(static_cast<int64_t>(argmax.size()) == dy.size(), ErrorKind::kShape,
          "max pooling backward needs the forward argmax cache");
  Tensor<T> dx(in_shape);
  for (int64_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// Transposed convolution 2x2, stride 2: input pixel (h, w) stamps a 2x2 block
// at (2h + dy, 2w + dx). Stamps never overlap.

template <typename T>
Tensor<T> TransposedConvForward(const Tensor<T>& x, const LayerParams<T>& p) {
  const Shape4& ws = p.weights.shape();
  Require(ws.n == 2 && ws.h == 2 && ws.c == x.c(), ErrorKind::kShape,
          "transposed weight must be (2,2,Cout,Cin) with Cin = input C");
  const int cin = x.c();
  const int cout = ws.w;
  Require(static_cast<int>(p.bias.size()) == cout, ErrorKind::kShape,
          "transposed conv bias length mismatch");
  Tensor<T> y({x.n(), x.h() * 2, x.w() * 2, cout});
  const T* wd = p.weights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int ih = 0; ih < x.h(); ++ih) {
      for (int iw = 0; iw < x.w(); ++iw) {
        const T* in = &x.at(n, ih, iw, 0);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            T* out = &y.at(n, 2 * ih + dy, 2 * iw + dx, 0);
            const T* wk = wd + (dy * 2 + dx) * int64_t{cout} * cin;
            for (int co = 0; co < cout; ++co) {
              const T* wrow = wk + int64_t{co} * cin;
              T acc = p.bias[co];
              for (int ci = 0; ci < cin; ++ci) acc += in[ci] * wrow[ci];
              out[co] = acc;
            }
          }
        }
      }
    }
  }
  detail::AddMacs(x.size() / cin * 4 * int64_t{cin} * cout);
  return y;
}

// The input gradient is a stride-2 2x2 correlation of dy with the weights.
template <typename T>
LayerGrads<T> TransposedConvBackward(const Tensor<T>& x,
                                     const LayerParams<T>& p,
                                     const Tensor<T>& dy) {
  const Shape4& ws = p.weights.shape();
  const int cin = x.c();
  const int cout = ws.w;
  Require(dy.shape() == Shape4{x.n(), x.h() * 2, x.w() * 2, cout},
          ErrorKind::kShape, "transposed conv upstream gradient mismatch");
  LayerGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(ws),
                  std::vector<T>(cout, T{0})};
  const T* wd = p.weights.ptr();
  T* dwd = g.dweights.ptr();
  for (int n = 0; n < x.n(); ++n) {
    for (int ih = 0; ih < x.h(); ++ih) {
      for (int iw = 0; iw < x.w(); ++iw) {
        const T* in = &x.at(n, ih, iw, 0);
        T* din = &g.dx.at(n, ih, iw, 0);
        for (int dyy = 0; dyy < 2; ++dyy) {
          for (int dxx = 0; dxx < 2; ++dxx) {
            const T* go = &dy.at(n, 2 * ih + dyy, 2 * iw + dxx, 0);
            const int64_t off = (dyy * 2 + dxx) * int64_t{cout} * cin;
            for (int co = 0; co < cout; ++co) {
              const T gv = go[co];
              g.dbias[co] += gv;
              const T* wrow = wd + off + int64_t{co} * cin;
              T* dwrow = dwd + off + int64_t{co} * cin;
              for (int ci = 0; ci < cin; ++ci) {
                din[ci] += gv * wrow[ci];
                dwrow[ci] += gv * in[ci];
              }
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Channel concatenation [a ; b].

template <typename T>
Tensor<T> ConcatChannels(const Tensor<T>& a, const Tensor<T>& b) {
  Require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(),
          ErrorKind::kShape,
          "concat inputs differ: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y({a.n(), a.h(), a.w(), a.c() + b.c()});
  const int64_t px = int64_t{a.n()} * a.h() * a.w();
  for (int64_t i = 0; i < px; ++i) {
    std::copy_n(a.ptr() + i * a.c(), a.c(), y.ptr() + i * y.c());
    std::copy_n(b.ptr() + i * b.c(), b.c(), y.ptr() + i * y.c() + a.c());
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> ConcatBackward(const Tensor<T>& dy,
                                               int a_channels) {
  Require(a_channels > 0 && a_channels < dy.c(), ErrorKind::kShape,
          "concat split point out of range");
  const int bc = dy.c() - a_channels;
  Tensor<T> da({dy.n(), dy.h(), dy.w(), a_channels});
  Tensor<T> db({dy.n(), dy.h(), dy.w(), bc});
  const int64_t px = int64_t{dy.n()} * dy.h() * dy.w();
  for (int64_t i = 0; i < px; ++i) {
    std::copy_n(dy.ptr() + i * dy.c(), a_channels, da.ptr() + i * a_channels);
    std::copy_n(dy.ptr() + i * dy.c() + a_channels, bc, db.ptr() + i * bc);
  }
  return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// Element-wise activations.

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

// Gradient passes where the input is strictly positive.
template <typename T>
Tensor<T> ReluBackward(const Tensor<T>& x, const Tensor<T>& dy) {
  Require(x.shape() == dy.shape(), ErrorKind::kShape,
          "relu backward shape mismatch");
  Tensor<T> dx(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
T SigmoidScalar(T v) {
  // Split by sign so exp never overflows.
  if (v >= T{0}) {
    const T e = std::exp(-v);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(v);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = SigmoidScalar(x[i]);
  return y;
}

// Uses the forward output y: d/dx sigmoid = y (1 - y).
template <typename T>
Tensor<T> SigmoidBackward(const Tensor<T>& y, const Tensor<T>& dy) {
  Require(y.shape() == dy.shape(), ErrorKind::kShape,
          "sigmoid backward shape mismatch");
  Tensor<T> dx(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel.

inline constexpr double kBatchNormEpsilon = 1e-3;

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<T> inv_std;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;
};

// Training mode: normalizes with the batch statistics (biased variance) and
// records them in `cache` for the backward pass and moving averages.
template <typename T>
Tensor<T> BatchNormTrainForward(const Tensor<T>& x, const LayerParams<T>& p,
                                BatchNormCache<T>* cache) {
  const int ch = x.c();
  Require(p.weights.size() == ch && static_cast<int>(p.bias.size()) == ch,
          ErrorKind::kShape, "batch norm parameter length mismatch");
  const int64_t px = x.size() / ch;
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) mean[c] += x[i * ch + c];
  }
  for (int c = 0; c < ch; ++c) mean[c] /= static_cast<double>(px);
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) {
      const double d = x[i * ch + c] - mean[c];
      var[c] += d * d;
    }
  }
  BatchNormCache<T> local;
  BatchNormCache<T>& bc = cache ? *cache : local;
  bc.inv_std.assign(ch, T{0});
  bc.batch_mean.assign(ch, T{0});
  bc.batch_var.assign(ch, T{0});
  for (int c = 0; c < ch; ++c) {
    var[c] /= static_cast<double>(px);
    bc.batch_mean[c] = static_cast<T>(mean[c]);
    bc.batch_var[c] = static_cast<T>(var[c]);
    bc.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var[c] + kBatchNormEpsilon));
  }
  bc.normalized = Tensor<T>(x.shape());
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) {
      const T xh = (x[i * ch + c] - bc.batch_mean[c]) * bc.inv_std[c];
      bc.normalized[i * ch + c] = xh;
      y[i * ch + c] = p.weights[c] * xh + p.bias[c];
    }
  }
  return y;
}

// Inference mode: normalizes with the moving statistics.
template <typename T>
Tensor<T> BatchNormInferForward(const Tensor<T>& x, const LayerParams<T>& p) {
  const int ch = x.c();
  Require(p.weights.size() == ch && static_cast<int>(p.bias.size()) == ch &&
              static_cast<int>(p.moving_mean.size()) == ch &&
              static_cast<int>(p.moving_var.size()) == ch,
          ErrorKind::kShape, "batch norm parameter length mismatch");
  std::vector<T> scale(ch), shift(ch);
  for (int c = 0; c < ch; ++c) {
    scale[c] = p.weights[c] /
               static_cast<T>(std::sqrt(static_cast<double>(p.moving_var[c]) +
                                        kBatchNormEpsilon));
    shift[c] = p.bias[c] - p.moving_mean[c] * scale[c];
  }
  Tensor<T> y(x.shape());
  const int64_t px = x.size() / ch;
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) {
      y[i * ch + c] = x[i * ch + c] * scale[c] + shift[c];
    }
  }
  return y;
}

// Training-mode backward; dweights holds dgamma, dbias holds dbeta.
template <typename T>
LayerGrads<T> BatchNormBackward(const BatchNormCache<T>& cache,
                                const LayerParams<T>& p, const Tensor<T>& dy) {
  Require(!cache.normalized.empty() && cache.normalized.shape() == dy.shape(),
          ErrorKind::kShape, "batch norm backward needs the forward cache");
  const int ch = dy.c();
  const int64_t px = dy.size() / ch;
  std::vector<double> sum_dy(ch, 0.0), sum_dy_xh(ch, 0.0);
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) {
      sum_dy[c] += dy[i * ch + c];
      sum_dy_xh[c] += static_cast<double>(dy[i * ch + c]) *
                      cache.normalized[i * ch + c];
    }
  }
  LayerGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>(p.weights.shape()),
                  std::vector<T>(ch, T{0})};
  const double inv_m = 1.0 / static_cast<double>(px);
  for (int c = 0; c < ch; ++c) {
    g.dweights[c] = static_cast<T>(sum_dy_xh[c]);
    g.dbias[c] = static_cast<T>(sum_dy[c]);
  }
  for (int64_t i = 0; i < px; ++i) {
    for (int c = 0; c < ch; ++c) {
      const double xh = cache.normalized[i * ch + c];
      const double v = (dy[i * ch + c] - inv_m * sum_dy[c] -
                        inv_m * xh * sum_dy_xh[c]) *
                       static_cast<double>(p.weights[c]) * cache.inv_std[c];
      g.dx[i * ch + c] = static_cast<T>(v);
    }
  }
  return g;
}

}  // namespace microseg::tensorops
