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
#include <functional>
#include <string>
#include <vector>

#include "tensorops/tensor.hpp"

namespace microseg::evaluation {

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Pixels with prob >= threshold are predicted crack. Counts pool over every
// pixel of every batch item.
template <typename T>
ConfusionCounts Confusion(const tensorops::Tensor<T>& probs,
                          const tensorops::Tensor<T>& mask,
                          double threshold = 0.5);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Each metric is 0 when its denominator is 0.
PrecisionRecallF1 ComputePrecisionRecallF1(const ConfusionCounts& c);

struct MiouResult {
  double miou = 0.0;
  double crack_iou = 0.0;
  double background_iou = 0.0;
};

// Two classes. A class with an empty union (absent and never predicted)
// scores IoU 1.
MiouResult ComputeMiou(const ConfusionCounts& c);

struct MetricsRecord {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_iou;  // {crack, background}
  ConfusionCounts counts;
  int64_t images = 0;
};

MetricsRecord MetricsFromCounts(const ConfusionCounts& c);

enum class Aggregation { kMicro, kMacro };

// Micro: metrics of the pooled counts. Macro: mean of per-image metrics
// (counts still pooled for reference).
MetricsRecord Aggregate(const std::vector<ConfusionCounts>& per_image,
                        Aggregation aggregation = Aggregation::kMicro);

struct Evaluation {
  MetricsRecord record;
  std::vector<ConfusionCounts> per_image;
};

struct LabelledImage {
  const tensorops::Tensor<float>* image;
  const tensorops::Tensor<float>* mask;
};

using Predictor =
    std::function<tensorops::Tensor<float>(const tensorops::Tensor<float>&)>;

// Runs `predict` on every image (in parallel across up to `workers`
// threads), thresholds, and aggregates. Throws Error(kEmpty) on an empty
// split.
Evaluation EvaluateSplit(const Predictor& predict,
                         const std::vector<LabelledImage>& split,
                         double threshold = 0.5,
                         Aggregation aggregation = Aggregation::kMicro,
                         int workers = 1);

// "image,tp,fp,fn,tn" rows; the image column holds `names` when given, else
// the row index.
std::string PerImageCsv(const std::vector<ConfusionCounts>& per_image,
                        const std::vector<std::string>& names = {});
std::vector<ConfusionCounts> ParsePerImageCsv(const std::string& text);

}  // namespace microseg::evaluation
