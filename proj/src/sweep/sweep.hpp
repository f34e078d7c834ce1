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

#include <optional>
#include <string>
#include <vector>

#include "archgen/archgen.hpp"
#include "dataio/dataset.hpp"
#include "json.hpp"
#include "training/trainer.hpp"

namespace microseg::sweep {

struct SweepOptions {
  // Config ids such as "d4_x1-4_dw"; empty runs the whole grid.
  std::vector<std::string> configs;
  training::TrainConfig train;
  // Use at most this many training samples (0 = all).
  size_t train_limit = 0;
  // Estimates only; metric columns stay missing.
  bool skip_train = false;
  size_t calibration_samples = 64;
  double threshold = 0.5;
  uint64_t split_seed = 0;
  // Concurrent config slots.
  int workers = 1;
};

struct SweepRow {
  archgen::ArchConfig config;
  std::string id;
  int64_t params = 0;
  int64_t macs = 0;
  int64_t flash_float = 0;
  int64_t flash_int8 = 0;
  int64_t peak_float = 0;
  int64_t peak_int8 = 0;
  std::optional<double> f1_float, miou_float, f1_int8, miou_int8;
  int best_epoch = 0;
  // "ok", "estimated" or "error: <message>".
  std::string status = "ok";
  bool pareto = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // Empty when the reference point (4 blocks, x1/4, depthwise) is on the
  // Pareto front.
  std::string divergence_note;
};

// Resolves option ids to configs sorted by (depth descending, conv type,
// scale descending). Throws Error(kInvalidArgument) for unknown or
// duplicate ids.
std::vector<archgen::ArchConfig> SelectConfigs(const std::vector<std::string>& ids);

// Splits the dataset, then for each config trains on the training split,
// calibrates on the validation split, quantizes and evaluates both precisions
// on the test split. A failing config records its error in the row.
SweepResult RunSweep(const std::vector<dataio::SamplePair>& dataset,
                     const SweepOptions& options);

// Marks rows not dominated in (int8 F1 higher, int8 flash lower). Rows
// without an int8 F1 never join the front.
void MarkPareto(std::vector<SweepRow>& rows);
std::string DivergenceNote(const std::vector<SweepRow>& rows);

const std::vector<std::string>& SweepColumns();
std::string SweepCsv(const SweepResult& result);
nlohmann::json SweepJson(const SweepResult& result);

}  // namespace microseg::sweep
