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

#include "training/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "common/error.hpp"
#include "common/format.hpp"
#include "common/rng.hpp"
#include "common/threads.hpp"

namespace microseg::training {

using archgen::LayerGraph;
using archgen::LayerKind;
using evaluation::LabelledImage;
using tensorops::ModelParams;
using tensorops::Tensor;

void Validate(const TrainConfig& c) {
  Require(c.learning_rate >= 0.0 && std::isfinite(c.learning_rate),
          ErrorKind::kInvalidArgument, "learning rate must be >= 0");
  Require(c.batch_size >= 1, ErrorKind::kInvalidArgument,
          "batch size must be >= 1");
  Require(c.epochs >= 1, ErrorKind::kInvalidArgument, "epochs must be >= 1");
  Require(c.bn_momentum >= 0.0 && c.bn_momentum < 1.0,
          ErrorKind::kInvalidArgument, "batch norm momentum must be in [0, 1)");
  Require(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0 &&
              c.adam_epsilon > 0.0,
          ErrorKind::kInvalidArgument, "invalid Adam settings");
}

namespace {

void UpdateMovingStats(const LayerGraph& g, ModelParams<float>& params,
                       const tensorops::ForwardCache<float>& cache,
                       double momentum) {
  for (size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].kind != LayerKind::kBatchNorm) continue;
    auto& p = params[i];
    const auto& bn = cache.batch_norm[i];
    for (size_t c = 0; c < p.moving_mean.size(); ++c) {
      p.moving_mean[c] = static_cast<float>(momentum * p.moving_mean[c] +
                                            (1.0 - momentum) * bn.batch_mean[c]);
      p.moving_var[c] = static_cast<float>(momentum * p.moving_var[c] +
                                           (1.0 - momentum) * bn.batch_var[c]);
    }
  }
}

}  // namespace

double MeanLoss(const LayerGraph& g, const ModelParams<float>& params,
                const std::vector<LabelledImage>& split,
                const TverskyParams& tversky, int workers) {
  if (split.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(split.size());
  ParallelFor(split.size(), workers, [&](size_t i) {
    const Tensor<float> probs = tensorops::ModelForward(g, params, *split[i].image);
    losses[i] = FocalTverskyLoss(probs, *split[i].mask, tversky).loss;
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(split.size());
}

TrainResult Train(const LayerGraph& g, ModelParams<float> init,
                  const std::vector<LabelledImage>& train,
                  const std::vector<LabelledImage>& val,
                  const TrainConfig& config, const TverskyParams& tversky,
                  const EpochCallback& on_epoch) {
  Validate(config);
  Validate(tversky);
  Require(!train.empty(), ErrorKind::kEmpty, "training split is empty");
  tensorops::CheckParams(g, init);

  TrainResult result;
  ModelParams<float> params = std::move(init);
  AdamState adam;
  const AdamConfig adam_config{config.learning_rate, config.beta1, config.beta2,
                               config.adam_epsilon};
  const CounterRng order_rng = CounterRng(config.seed).Fork(0x5eed);
  double best_f1 = -1.0;

  std::vector<size_t> order(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    CounterRng rng = order_rng.Fork(static_cast<uint64_t>(epoch));
    Shuffle(order, rng);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<const Tensor<float>*> xs, ys;
      for (size_t k = start; k < end; ++k) {
        xs.push_back(train[order[k]].image);
        ys.push_back(train[order[k]].mask);
      }
      const Tensor<float> x = tensorops::StackBatch(xs);
      const Tensor<float> y = tensorops::StackBatch(ys);

      tensorops::ForwardCache<float> cache;
      const Tensor<float> probs = tensorops::ModelForward(
          g, params, x, tensorops::Mode::kTraining, &cache);
      const LossResult<float> loss = FocalTverskyLoss(probs, y, tversky);
      if (!std::isfinite(loss.loss)) {
        Fail(ErrorKind::kNumeric,
             "non-finite loss at epoch " + std::to_string(epoch) +
                 ", batch starting at sample " + std::to_string(start));
      }
      loss_sum += loss.loss * static_cast<double>(end - start);

      const tensorops::ModelGrads<float> grads =
          tensorops::ModelBackward(g, params, cache, loss.grad);
      AdamStep(params, grads.params, adam, adam_config);
      UpdateMovingStats(g, params, cache, config.bn_momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (val.empty()) {
      rec.val_loss = rec.val_f1 = rec.val_miou =
          std::numeric_limits<double>::quiet_NaN();
    } else {
      rec.val_loss = MeanLoss(g, params, val, tversky, config.workers);
      const evaluation::Evaluation ev = evaluation::EvaluateSplit(
          [&](const Tensor<float>& im) {
            return tensorops::ModelForward(g, params, im);
          },
          val, config.threshold, evaluation::Aggregation::kMicro,
          config.workers);
      rec.val_f1 = ev.record.f1;
      rec.val_miou = ev.record.miou;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool improved = std::isnan(rec.val_f1) ? true : rec.val_f1 > best_f1;
    if (improved) {
      if (!std::isnan(rec.val_f1)) best_f1 = rec.val_f1;
      result.best_params = params;
      result.best_epoch = epoch;
    }
  }
  result.final_params = std::move(params);
  return result;
}

TrainResult Train(const LayerGraph& g, const std::vector<LabelledImage>& train,
                  const std::vector<LabelledImage>& val,
                  const TrainConfig& config, const TverskyParams& tversky,
                  const EpochCallback& on_epoch) {
  return Train(g, tensorops::InitParams(g, config.seed), train, val, config,
               tversky, on_epoch);
}

std::string HistoryCsv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_f1,val_miou\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << FormatNumber(r.train_loss) << ','
       << FormatNumber(r.val_loss) << ',' << FormatNumber(r.val_f1) << ','
       << FormatNumber(r.val_miou) << '\n';
  }
  return os.str();
}

}  // namespace microseg::training
