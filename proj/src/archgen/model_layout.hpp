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
#include <string>
#include <vector>

#include "archgen/archgen.hpp"
#include "json.hpp"

namespace microseg::archgen {

enum class Precision { kFloat32, kInt8 };

std::string PrecisionName(Precision p);  // "float32" | "int8"
Precision ParsePrecision(const std::string& name);

enum class DType { kF32, kI8, kI32 };

int DTypeSize(DType t);
std::string DTypeName(DType t);

// One little-endian array in the model file. layer == -1 marks model-wide
// blobs (activation quantization tables).
struct BlobSpec {
  int layer = -1;
  std::string name;
  DType dtype = DType::kF32;
  int64_t count = 0;

  int64_t bytes() const { return count * DTypeSize(dtype); }
};

// Model file layout:
//   bytes 0..7    magic "MSEGMDL\0"
//   bytes 8..11   uint32 format version
//   bytes 12..15  uint32 header length H
//   16..16+H      JSON header (config, layers, precision, blob table)
//   blobs         concatenated in blob-table order
//   last 8 bytes  uint64 FNV-1a of every preceding byte
inline constexpr char kModelMagic[8] = {'M', 'S', 'E', 'G', 'M', 'D', 'L', '\0'};
inline constexpr uint32_t kModelVersion = 1;
inline constexpr int64_t kModelPrefixBytes = 16;
inline constexpr int64_t kModelTrailerBytes = 8;

std::vector<BlobSpec> ModelBlobs(const LayerGraph& graph, Precision precision);

// Header contents depend only on the graph and precision, never on weight
// values, so the file size is known before any weights exist.
nlohmann::json ModelHeader(const LayerGraph& graph, Precision precision);
std::string ModelHeaderText(const LayerGraph& graph, Precision precision);

int64_t ModelFileSize(const LayerGraph& graph, Precision precision);

}  // namespace microseg::archgen
