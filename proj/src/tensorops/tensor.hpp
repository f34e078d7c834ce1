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
#include <span>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace microseg::tensorops {

struct Shape4 {
  int n = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  int64_t size() const { return int64_t{n} * h * w * c; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
           std::to_string(w) + "," + std::to_string(c) + ")";
  }
};

// Dense NHWC array; element (n, h, w, c) lives at ((n*H + h)*W + w)*C + c.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(const Shape4& shape, T fill = T{}) : shape_(shape) {
    Require(shape.n >= 1 && shape.h >= 1 && shape.w >= 1 && shape.c >= 1,
            ErrorKind::kShape, "tensor dimensions must be >= 1, got " +
                                   shape.str());
    data_.assign(static_cast<size_t>(shape.size()), fill);
  }

  Tensor(const Shape4& shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    Require(shape.n >= 1 && shape.h >= 1 && shape.w >= 1 && shape.c >= 1,
            ErrorKind::kShape, "tensor dimensions must be >= 1, got " +
                                   shape.str());
    Require(static_cast<int64_t>(data_.size()) == shape.size(),
            ErrorKind::kShape, "tensor data length does not match shape");
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  int64_t index(int n, int h, int w, int c) const {
    return ((int64_t{n} * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }

  T& at(int n, int h, int w, int c) { return data_[index(n, h, w, c)]; }
  const T& at(int n, int h, int w, int c) const {
    return data_[index(n, h, w, c)];
  }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  // Copy of batch item `n` as a batch of one.
  Tensor Item(int n) const {
    Shape4 s = shape_;
    s.n = 1;
    const int64_t stride = s.size();
    std::vector<T> out(data_.begin() + n * stride,
                       data_.begin() + (n + 1) * stride);
    return Tensor(s, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> Cast(const Tensor<From>& x) {
  std::vector<To> out(x.vec().begin(), x.vec().end());
  return Tensor<To>(x.shape(), std::move(out));
}

// Stacks batch-of-one tensors with equal H, W, C along N.
template <typename T>
Tensor<T> StackBatch(const std::vector<const Tensor<T>*>& items) {
  Require(!items.empty(), ErrorKind::kEmpty, "cannot stack an empty batch");
  Shape4 s = items.front()->shape();
  std::vector<T> data;
  data.reserve(static_cast<size_t>(s.size() * items.size()));
  for (const Tensor<T>* t : items) {
    Require(t->h() == s.h && t->w() == s.w && t->c() == s.c,
            ErrorKind::kShape, "batch items differ in shape");
    data.insert(data.end(), t->vec().begin(), t->vec().end());
  }
  s.n = static_cast<int>(data.size() / (int64_t{s.h} * s.w * s.c));
  return Tensor<T>(s, std::move(data));
}

}  // namespace microseg::tensorops
