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

#include "dataio/model_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace microseg::dataio {

using archgen::BlobSpec;
using archgen::DType;
using archgen::LayerKind;
using archgen::Precision;

namespace {

template <typename U>
void PutLe(std::string& out, U v) {
  for (size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U GetLe(const std::string& in, size_t pos) {
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void PutF32(std::string& out, float f) { PutLe(out, std::bit_cast<uint32_t>(f)); }
void PutI32(std::string& out, int32_t v) { PutLe(out, static_cast<uint32_t>(v)); }

class Reader {
 public:
  Reader(const std::string& b, size_t pos) : b_(b), pos_(pos) {}
  float F32() { return std::bit_cast<float>(Next<uint32_t>()); }
  int32_t I32() { return static_cast<int32_t>(Next<uint32_t>()); }
  int8_t I8() { return static_cast<int8_t>(b_[pos_++]); }
  size_t pos() const { return pos_; }

 private:
  template <typename U>
  U Next() {
    U v = GetLe<U>(b_, pos_);
    pos_ += sizeof(U);
    return v;
  }
  const std::string& b_;
  size_t pos_;
};

void CheckCount(const BlobSpec& blob, size_t have) {
  Require(static_cast<int64_t>(have) == blob.count, ErrorKind::kShape,
          "blob '" + blob.name + "' of layer " + std::to_string(blob.layer) +
              " has " + std::to_string(have) + " values, expected " +
              std::to_string(blob.count));
}

}  // namespace

ModelFile FloatModel(const archgen::LayerGraph& graph,
                     tensorops::ModelParams<float> params) {
  tensorops::CheckParams(graph, params);
  ModelFile m;
  m.precision = Precision::kFloat32;
  m.graph = graph;
  m.params = std::move(params);
  return m;
}

ModelFile Int8Model(quantization::QuantizedModel qm) {
  quantization::CheckQuantizedModel(qm);
  ModelFile m;
  m.precision = Precision::kInt8;
  m.graph = qm.graph;
  m.quantized = std::move(qm);
  return m;
}

std::string SerializeModel(const ModelFile& m) {
  const std::string header = archgen::ModelHeaderText(m.graph, m.precision);
  std::string out(archgen::kModelMagic, archgen::kModelMagic + 8);
  PutLe<uint32_t>(out, archgen::kModelVersion);
  PutLe<uint32_t>(out, static_cast<uint32_t>(header.size()));
  out += header;
  if (m.precision == Precision::kFloat32) {
    tensorops::CheckParams(m.graph, m.params);
  } else {
    quantization::CheckQuantizedModel(m.quantized);
  }
  for (const BlobSpec& blob : archgen::ModelBlobs(m.graph, m.precision)) {
    if (m.precision == Precision::kFloat32) {
      const auto& p = m.params[blob.layer];
      const std::vector<float>* src = nullptr;
      if (blob.name == "weights" || blob.name == "gamma") src = &p.weights.vec();
      if (blob.name == "bias" || blob.name == "beta") src = &p.bias;
      if (blob.name == "moving_mean") src = &p.moving_mean;
      if (blob.name == "moving_var") src = &p.moving_var;
      Require(src != nullptr, ErrorKind::kFormat, "unknown blob " + blob.name);
      CheckCount(blob, src->size());
      for (float f : *src) PutF32(out, f);
      continue;
    }
    const auto& q = m.quantized;
    if (blob.layer < 0) {
      CheckCount(blob, q.activations.size());
      for (const auto& qp : q.activations) {
        if (blob.name == "act_scale") {
          PutF32(out, qp.scale);
        } else {
          PutI32(out, qp.zero_point);
        }
      }
      continue;
    }
    const auto& ql = q.layers[blob.layer];
    if (blob.name == "weights") {
      CheckCount(blob, ql.weights.size());
      for (int8_t v : ql.weights) out.push_back(static_cast<char>(v));
    } else if (blob.name == "bias") {
      CheckCount(blob, ql.bias.size());
      for (int32_t v : ql.bias) PutI32(out, v);
    } else {
      CheckCount(blob, ql.weight_scale.size());
      for (float f : ql.weight_scale) PutF32(out, f);
    }
  }
  PutLe<uint64_t>(out, Fnv1a(out.data(), out.size()));
  return out;
}

ModelFile DeserializeModel(const std::string& b) {
  const size_t prefix = static_cast<size_t>(archgen::kModelPrefixBytes);
  const size_t trailer = static_cast<size_t>(archgen::kModelTrailerBytes);
  Require(b.size() >= prefix + trailer, ErrorKind::kFormat,
          "model file is truncated");
  Require(std::memcmp(b.data(), archgen::kModelMagic, 8) == 0, ErrorKind::kFormat,
          "not a microseg model file (bad magic)");
  const uint32_t version = GetLe<uint32_t>(b, 8);
  Require(version == archgen::kModelVersion, ErrorKind::kFormat,
          "unsupported model file version " + std::to_string(version));
  const size_t header_len = GetLe<uint32_t>(b, 12);
  Require(prefix + header_len + trailer <= b.size(), ErrorKind::kFormat,
          "model file is truncated inside the header");
  const uint64_t stored = GetLe<uint64_t>(b, b.size() - trailer);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(b.substr(prefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("corrupt model header: ") + e.what());
  }
  ModelFile m;
  try {
    Require(header.at("format") == "microseg-model", ErrorKind::kFormat,
            "header does not describe a microseg model");
    m.precision = archgen::ParsePrecision(header.at("precision").get<std::string>());
    m.graph = archgen::GraphFromJson(header);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("corrupt model header: ") + e.what());
  } catch (const Error& e) {
    Fail(ErrorKind::kFormat, std::string("corrupt model header: ") + e.what());
  }
  Require(header == archgen::ModelHeader(m.graph, m.precision), ErrorKind::kFormat,
          "model header blob table does not match its graph");
  Require(static_cast<int64_t>(b.size()) ==
              archgen::ModelFileSize(m.graph, m.precision),
          ErrorKind::kFormat,
          b.size() < static_cast<size_t>(archgen::ModelFileSize(m.graph, m.precision))
              ? "model file is truncated"
              : "model file has trailing bytes");
  Require(Fnv1a(b.data(), b.size() - trailer) == stored, ErrorKind::kFormat,
          "model file checksum mismatch");

  Reader rd(b, prefix + header_len);
  const auto blobs = archgen::ModelBlobs(m.graph, m.precision);
  if (m.precision == Precision::kFloat32) {
    m.params = tensorops::ZeroParams<float>(m.graph);
    for (const BlobSpec& blob : blobs) {
      auto& p = m.params[blob.layer];
      std::vector<float>* dst = nullptr;
      if (blob.name == "weights" || blob.name == "gamma") dst = &p.weights.vec();
      if (blob.name == "bias" || blob.name == "beta") dst = &p.bias;
      if (blob.name == "moving_mean") dst = &p.moving_mean;
      if (blob.name == "moving_var") dst = &p.moving_var;
      Require(dst != nullptr, ErrorKind::kFormat, "unknown blob " + blob.name);
      CheckCount(blob, dst->size());
      for (float& f : *dst) f = rd.F32();
    }
    return m;
  }
  auto& q = m.quantized;
  q.graph = m.graph;
  q.layers.resize(m.graph.layers.size());
  q.activations.resize(m.graph.layers.size() + 1);
  for (const BlobSpec& blob : blobs) {
    const size_t count = static_cast<size_t>(blob.count);
    if (blob.layer < 0) {
      for (auto& qp : q.activations) {
        if (blob.name == "act_scale") {
          qp.scale = rd.F32();
        } else {
          qp.zero_point = rd.I32();
        }
      }
      continue;
    }
    auto& ql = q.layers[blob.layer];
    if (blob.name == "weights") {
      ql.weights.resize(count);
      for (auto& v : ql.weights) v = rd.I8();
    } else if (blob.name == "bias") {
      ql.bias.resize(count);
      for (auto& v : ql.bias) v = rd.I32();
    } else {
      ql.weight_scale.resize(count);
      for (auto& f : ql.weight_scale) f = rd.F32();
    }
  }
  try {
    quantization::CheckQuantizedModel(q);
  } catch (const Error& e) {
    Fail(ErrorKind::kFormat, std::string("corrupt int8 payload: ") + e.what());
  }
  return m;
}

void SaveModel(const std::string& path, const ModelFile& m) {
  const std::string bytes = SerializeModel(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  Require(static_cast<bool>(out), ErrorKind::kIo, "write failed for '" + path + "'");
}

ModelFile LoadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorKind::kNotFound,
          "cannot open model file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return DeserializeModel(bytes);
}

}  // namespace microseg::dataio
