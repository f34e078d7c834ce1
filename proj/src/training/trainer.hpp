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

#include "archgen/archgen.hpp"
#include "evaluation/metrics.hpp"
#include "tensorops/model.hpp"
#include "training/adam.hpp"
#include "training/loss.hpp"

namespace microseg::training {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs = 15;
  uint64_t seed = 0;
  // Moving statistics follow moving = momentum * moving + (1 - momentum) * batch.
  double bn_momentum = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  // Threshold for the per-epoch validation metrics.
  double threshold = 0.5;
  int workers = 1;
};

void Validate(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when the validation split is empty
  double val_f1 = 0.0;
  double val_miou = 0.0;
};

struct TrainResult {
  tensorops::ModelParams<float> final_params;
  tensorops::ModelParams<float> best_params;  // highest validation F1
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on the Focal Tversky loss. Each epoch visits the training
// split in a seeded order (the last batch may be short). Throws Error(kEmpty)
// for an empty training split and Error(kNumeric) on a non-finite loss.
TrainResult Train(const archgen::LayerGraph& graph,
                  tensorops::ModelParams<float> init,
                  const std::vector<evaluation::LabelledImage>& train,
                  const std::vector<evaluation::LabelledImage>& val,
                  const TrainConfig& config, const TverskyParams& tversky,
                  const EpochCallback& on_epoch = {});

// Same, starting from InitParams(graph, config.seed).
TrainResult Train(const archgen::LayerGraph& graph,
                  const std::vector<evaluation::LabelledImage>& train,
                  const std::vector<evaluation::LabelledImage>& val,
                  const TrainConfig& config, const TverskyParams& tversky,
                  const EpochCallback& on_epoch = {});

// Mean per-sample loss of the model in inference mode.
double MeanLoss(const archgen::LayerGraph& graph,
                const tensorops::ModelParams<float>& params,
                const std::vector<evaluation::LabelledImage>& split,
                const TverskyParams& tversky, int workers = 1);

// "epoch,train_loss,val_loss,val_f1,val_miou" rows; NaN prints as NA.
std::string HistoryCsv(const std::vector<EpochRecord>& history);

}  // namespace microseg::training
