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

#include "evaluation/metrics.hpp"

#include <sstream>

#include "common/error.hpp"
#include "common/threads.hpp"

namespace microseg::evaluation {

using tensorops::Tensor;

template <typename T>
ConfusionCounts Confusion(const Tensor<T>& probs, const Tensor<T>& mask,
                          double threshold) {
  Require(probs.shape() == mask.shape(), ErrorKind::kShape,
          "prediction and mask shapes differ: " + probs.shape().str() +
              " vs " + mask.shape().str());
  ConfusionCounts c;
  for (int64_t i = 0; i < probs.size(); ++i) {
    const bool pred = static_cast<double>(probs[i]) >= threshold;
    const bool truth = mask[i] > T{0};
    if (pred && truth) {
      ++c.tp;
    } else if (pred) {
      ++c.fp;
    } else if (truth) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

template ConfusionCounts Confusion(const Tensor<float>&, const Tensor<float>&,
                                   double);
template ConfusionCounts Confusion(const Tensor<double>&, const Tensor<double>&,
                                   double);

namespace {
double Ratio(int64_t num, int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

PrecisionRecallF1 ComputePrecisionRecallF1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  r.precision = Ratio(c.tp, c.tp + c.fp);
  r.recall = Ratio(c.tp, c.tp + c.fn);
  const double s = r.precision + r.recall;
  r.f1 = s == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / s;
  return r;
}

MiouResult ComputeMiou(const ConfusionCounts& c) {
  MiouResult r;
  const int64_t crack_union = c.tp + c.fp + c.fn;
  const int64_t bg_union = c.tn + c.fn + c.fp;
  r.crack_iou = crack_union == 0 ? 1.0 : Ratio(c.tp, crack_union);
  r.background_iou = bg_union == 0 ? 1.0 : Ratio(c.tn, bg_union);
  r.miou = 0.5 * (r.crack_iou + r.background_iou);
  return r;
}

MetricsRecord MetricsFromCounts(const ConfusionCounts& c) {
  MetricsRecord m;
  const PrecisionRecallF1 prf = ComputePrecisionRecallF1(c);
  const MiouResult iou = ComputeMiou(c);
  m.precision = prf.precision;
  m.recall = prf.recall;
  m.f1 = prf.f1;
  m.miou = iou.miou;
  m.per_class_iou = {iou.crack_iou, iou.background_iou};
  m.counts = c;
  m.images = 1;
  return m;
}

MetricsRecord Aggregate(const std::vector<ConfusionCounts>& per_image,
                        Aggregation aggregation) {
  Require(!per_image.empty(), ErrorKind::kEmpty,
          "cannot aggregate an empty split");
  ConfusionCounts pooled;
  for (const auto& c : per_image) pooled += c;
  MetricsRecord out = MetricsFromCounts(pooled);
  if (aggregation == Aggregation::kMacro) {
    MetricsRecord mean;
    mean.per_class_iou = {0.0, 0.0};
    for (const auto& c : per_image) {
      const MetricsRecord m = MetricsFromCounts(c);
      mean.precision += m.precision;
      mean.recall += m.recall;
      mean.f1 += m.f1;
      mean.miou += m.miou;
      mean.per_class_iou[0] += m.per_class_iou[0];
      mean.per_class_iou[1] += m.per_class_iou[1];
    }
    const double k = static_cast<double>(per_image.size());
    out.precision = mean.precision / k;
    out.recall = mean.recall / k;
    out.f1 = mean.f1 / k;
    out.miou = mean.miou / k;
    out.per_class_iou = {mean.per_class_iou[0] / k, mean.per_class_iou[1] / k};
  }
  out.images = static_cast<int64_t>(per_image.size());
  return out;
}

Evaluation EvaluateSplit(const Predictor& predict,
                         const std::vector<LabelledImage>& split,
                         double threshold, Aggregation aggregation,
                         int workers) {
  Require(!split.empty(), ErrorKind::kEmpty, "evaluation split is empty");
  Evaluation ev;
  ev.per_image.resize(split.size());
  ParallelFor(split.size(), workers, [&](size_t i) {
    const Tensor<float> probs = predict(*split[i].image);
    ev.per_image[i] = Confusion(probs, *split[i].mask, threshold);
  });
  ev.record = Aggregate(ev.per_image, aggregation);
  return ev;
}

std::string PerImageCsv(const std::vector<ConfusionCounts>& per_image,
                        const std::vector<std::string>& names) {
  Require(names.empty() || names.size() == per_image.size(), ErrorKind::kShape,
          "one name per image expected");
  std::ostringstream os;
  os << "image,tp,fp,fn,tn\n";
  for (size_t i = 0; i < per_image.size(); ++i) {
    const auto& c = per_image[i];
    if (names.empty()) {
      os << i;
    } else {
      os << names[i];
    }
    os << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << '\n';
  }
  return os.str();
}

std::vector<ConfusionCounts> ParsePerImageCsv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  Require(line == "image,tp,fp,fn,tn", ErrorKind::kFormat,
          "unexpected per-image CSV header");
  std::vector<ConfusionCounts> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<int64_t> v;
    std::getline(ls, field, ',');
    try {
      while (std::getline(ls, field, ',')) v.push_back(std::stoll(field));
    } catch (const std::exception&) {
      Fail(ErrorKind::kFormat, "non-integer count in per-image CSV: " + line);
    }
    Require(v.size() == 4, ErrorKind::kFormat, "per-image CSV row needs 5 fields");
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

}  // namespace microseg::evaluation
