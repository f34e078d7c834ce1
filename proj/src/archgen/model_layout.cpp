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

#include "archgen/model_layout.hpp"

#include "common/error.hpp"

namespace microseg::archgen {

std::string PrecisionName(Precision p) {
  return p == Precision::kFloat32 ? "float32" : "int8";
}

Precision ParsePrecision(const std::string& name) {
  if (name == "float32") return Precision::kFloat32;
  if (name == "int8") return Precision::kInt8;
  Fail(ErrorKind::kFormat, "unknown precision '" + name + "'");
}

int DTypeSize(DType t) {
  switch (t) {
    case DType::kF32:
    case DType::kI32:
      return 4;
    case DType::kI8:
      return 1;
  }
  return 0;
}

std::string DTypeName(DType t) {
  switch (t) {
    case DType::kF32:
      return "f32";
    case DType::kI32:
      return "i32";
    case DType::kI8:
      return "i8";
  }
  return "?";
}

std::vector<BlobSpec> ModelBlobs(const LayerGraph& g, Precision precision) {
  std::vector<BlobSpec> blobs;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    const int idx = static_cast<int>(i);
    const ParamBreakdown p = LayerParams(l);
    if (HasWeights(l.kind)) {
      if (precision == Precision::kFloat32) {
        blobs.push_back({idx, "weights", DType::kF32, p.weights});
        blobs.push_back({idx, "bias", DType::kF32, p.biases});
      } else {
        blobs.push_back({idx, "weights", DType::kI8, p.weights});
        blobs.push_back({idx, "bias", DType::kI32, p.biases});
        blobs.push_back({idx, "weight_scale", DType::kF32, p.biases});
      }
    } else if (l.kind == LayerKind::kBatchNorm &&
               precision == Precision::kFloat32) {
      const int64_t c = l.in_shape.c;
      for (const char* name : {"gamma", "beta", "moving_mean", "moving_var"}) {
        blobs.push_back({idx, name, DType::kF32, c});
      }
    }
  }
  if (precision == Precision::kInt8) {
    const int64_t edges = static_cast<int64_t>(g.layers.size()) + 1;
    blobs.push_back({-1, "act_scale", DType::kF32, edges});
    blobs.push_back({-1, "act_zero_point", DType::kI32, edges});
  }
  return blobs;
}

nlohmann::json ModelHeader(const LayerGraph& g, Precision precision) {
  nlohmann::json blob_table = nlohmann::json::array();
  for (const auto& b : ModelBlobs(g, precision)) {
    blob_table.push_back({{"layer", b.layer},
                          {"name", b.name},
                          {"dtype", DTypeName(b.dtype)},
                          {"count", b.count}});
  }
  nlohmann::json header = GraphToJson(g);
  header["format"] = "microseg-model";
  header["version"] = kModelVersion;
  header["precision"] = PrecisionName(precision);
  header["blobs"] = std::move(blob_table);
  return header;
}

std::string ModelHeaderText(const LayerGraph& g, Precision precision) {
  return ModelHeader(g, precision).dump();
}

int64_t ModelFileSize(const LayerGraph& g, Precision precision) {
  int64_t size = kModelPrefixBytes + kModelTrailerBytes +
                 static_cast<int64_t>(ModelHeaderText(g, precision).size());
  for (const auto& b : ModelBlobs(g, precision)) size += b.bytes();
  return size;
}

}  // namespace microseg::archgen
