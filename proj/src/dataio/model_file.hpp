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

#include <string>

#include "archgen/archgen.hpp"
#include "archgen/model_layout.hpp"
#include "quantization/quantize.hpp"
#include "tensorops/model.hpp"

namespace microseg::dataio {

// A float32 model uses `params`; an int8 model uses `quantized` (whose graph
// equals `graph`).
struct ModelFile {
  archgen::Precision precision = archgen::Precision::kFloat32;
  archgen::LayerGraph graph;
  tensorops::ModelParams<float> params;
  quantization::QuantizedModel quantized;
};

ModelFile FloatModel(const archgen::LayerGraph& graph,
                     tensorops::ModelParams<float> params);
ModelFile Int8Model(quantization::QuantizedModel qm);

// Byte layout is documented with archgen::ModelBlobs; all integers and
// floats are little-endian.
std::string SerializeModel(const ModelFile& model);

// Throws Error(kFormat) for a bad magic, unsupported version, corrupt
// header, truncated or oversized payload, or checksum mismatch.
ModelFile DeserializeModel(const std::string& bytes);

void SaveModel(const std::string& path, const ModelFile& model);
ModelFile LoadModel(const std::string& path);

}  // namespace microseg::dataio
