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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evaluation/metrics.hpp"
#include "tensorops/tensor.hpp"

namespace microseg::dataio {

// image: (1, H, W, 3) in [0, 1]; mask: (1, H, W, 1) in {0, 1}.
struct SamplePair {
  std::string name;
  tensorops::Tensor<float> image;
  tensorops::Tensor<float> mask;
};

struct LoadOptions {
  int height = 96;
  int width = 96;
  // Take the central height x width window instead of resizing.
  bool center_crop = false;
  int workers = 1;
};

struct LoadedDataset {
  std::vector<SamplePair> samples;
  std::vector<std::string> warnings;
};

// Reads root/images/* and root/masks/* (PNG, PGM or PPM) matched by file
// stem, in lexicographic stem order. Throws Error(kNotFound) naming the stem
// of an unmatched file and Error(kEmpty) when no pairs exist.
LoadedDataset LoadDataset(const std::string& root, const LoadOptions& options = {});

// Writes images/<name>.<ext> and masks/<name>.<ext>; `format` is "png" or
// "pnm" (PPM images, PGM masks). Creates the directories.
void SaveDataset(const std::string& root, const std::vector<SamplePair>& samples,
                 const std::string& format = "png");

// Indices into the dataset.
struct DatasetSplits {
  std::vector<size_t> train;
  std::vector<size_t> val;
  std::vector<size_t> test;
  std::vector<std::string> warnings;
};

// Seeded shuffle, then contiguous cuts at floor(r0 * n) and
// floor((r0 + r1) * n); the test split takes the rest. Throws
// Error(kInvalidArgument) unless the ratios are non-negative and sum to 1.
DatasetSplits Split(size_t n, const std::array<double, 3>& ratios = {0.70, 0.15, 0.15},
                    uint64_t seed = 0);

std::vector<evaluation::LabelledImage> Select(
    const std::vector<SamplePair>& samples, const std::vector<size_t>& indices);
std::vector<evaluation::LabelledImage> All(const std::vector<SamplePair>& samples);

struct SynthOptions {
  int height = 96;
  int width = 96;
};

// Seeded synthetic crack images. Sample i depends only on (seed, i), so a
// prefix of a larger set equals the smaller set.
std::vector<SamplePair> SynthCracks(int n, uint64_t seed = 0,
                                    const SynthOptions& options = {});

double PositiveRate(const SamplePair& sample);

// FNV-1a over the float bytes of image then mask.
uint64_t SampleHash(const SamplePair& sample);

}  // namespace microseg::dataio
