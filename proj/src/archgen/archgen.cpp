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

#include "archgen/archgen.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "common/error.hpp"

namespace microseg::archgen {

namespace {

constexpr std::array<int, 3> kDepths = {5, 4, 3};
constexpr std::array<int, 5> kScaleDenominators = {1, 2, 4, 8, 16};

const std::map<LayerKind, std::string>& KindNames() {
  static const std::map<LayerKind, std::string> names = {
      {LayerKind::kConv3x3, "conv3x3"},
      {LayerKind::kDepthwiseConv3x3, "depthwise3x3"},
      {LayerKind::kPointwiseConv1x1, "pointwise1x1"},
      {LayerKind::kBatchNorm, "batchnorm"},
      {LayerKind::kConv1x1Out, "conv1x1_out"},
      {LayerKind::kRelu, "relu"},
      {LayerKind::kMaxPool2x2, "maxpool2x2"},
      {LayerKind::kTransposedConv2x2, "transposed2x2"},
      {LayerKind::kConcat, "concat"},
      {LayerKind::kSigmoid, "sigmoid"},
  };
  return names;
}

std::string GridDescription() {
  return "depth in {3,4,5}, scale in {x1, x1/2, x1/4, x1/8, x1/16}, "
         "conv in {standard, depthwise}";
}

class GraphBuilder {
 public:
  explicit GraphBuilder(const Shape3& input) : current_(input) {}

  int Add(LayerKind kind, int filters = 0, std::optional<int> skip = {}) {
    LayerSpec spec;
    spec.kind = kind;
    spec.in_shape = current_;
    spec.filters = filters;
    spec.skip_source = skip;
    const Shape3* skip_shape = skip ? &layers_[*skip].out_shape : nullptr;
    spec.out_shape = InferOutputShape(kind, current_, filters, skip_shape);
    current_ = spec.out_shape;
    layers_.push_back(spec);
    return static_cast<int>(layers_.size()) - 1;
  }

  // Two 3x3 convolutions with ReLU, or one depthwise-separable unit
  // (depthwise 3x3, pointwise 1x1, batch norm, ReLU). Returns the index of
  // the block's final ReLU.
  int ConvBlock(ConvType type, int filters) {
    if (type == ConvType::kStandard) {
      Add(LayerKind::kConv3x3, filters);
      Add(LayerKind::kRelu);
      Add(LayerKind::kConv3x3, filters);
      return Add(LayerKind::kRelu);
    }
    Add(LayerKind::kDepthwiseConv3x3, current_.c);
    Add(LayerKind::kPointwiseConv1x1, filters);
    Add(LayerKind::kBatchNorm);
    return Add(LayerKind::kRelu);
  }

  std::vector<LayerSpec> Take() { return std::move(layers_); }

 private:
  Shape3 current_;
  std::vector<LayerSpec> layers_;
};

}  // namespace

void Validate(const ArchConfig& c) {
  if (std::find(kDepths.begin(), kDepths.end(), c.depth) == kDepths.end()) {
    Fail(ErrorKind::kInvalidArgument,
         "depth " + std::to_string(c.depth) + " is outside the grid (" +
             GridDescription() + ")");
  }
  if (std::find(kScaleDenominators.begin(), kScaleDenominators.end(),
                c.scale_denominator) == kScaleDenominators.end()) {
    Fail(ErrorKind::kInvalidArgument,
         "filter scale 1/" + std::to_string(c.scale_denominator) +
             " is outside the grid (" + GridDescription() + ")");
  }
  if (c.base_filters <= 0 || c.base_filters % c.scale_denominator != 0) {
    Fail(ErrorKind::kInvalidArgument,
         "base_filters x filter_scale must be a positive integer");
  }
  if (c.input_h <= 0 || c.input_w <= 0 || c.input_c <= 0) {
    Fail(ErrorKind::kInvalidArgument, "input dimensions must be positive");
  }
  const int div = 1 << (c.depth - 1);
  if (c.input_h % div != 0 || c.input_w % div != 0) {
    Fail(ErrorKind::kInvalidArgument,
         "input " + std::to_string(c.input_h) + "x" +
             std::to_string(c.input_w) + " is not divisible by " +
             std::to_string(div) + " (2^(depth-1))");
  }
}

std::string ScaleName(int denominator) {
  return denominator == 1 ? "x1" : "x1/" + std::to_string(denominator);
}

std::string ConvTypeName(ConvType t) {
  return t == ConvType::kStandard ? "standard" : "depthwise";
}

ConvType ParseConvType(const std::string& name) {
  if (name == "standard" || name == "std" || name == "conv2d") {
    return ConvType::kStandard;
  }
  if (name == "depthwise" || name == "dw" || name == "dwconv2d" ||
      name == "depthwise_separable") {
    return ConvType::kDepthwiseSeparable;
  }
  Fail(ErrorKind::kInvalidArgument,
       "unknown conv type '" + name + "' (expected standard|depthwise)");
}

std::string ConfigId(const ArchConfig& c) {
  std::string id = "d" + std::to_string(c.depth) + "_x1";
  if (c.scale_denominator != 1) id += "-" + std::to_string(c.scale_denominator);
  id += c.conv_type == ConvType::kStandard ? "_std" : "_dw";
  return id;
}

ArchConfig ParseConfigId(const std::string& id) {
  ArchConfig c;
  auto bad = [&] {
    Fail(ErrorKind::kInvalidArgument, "malformed config id '" + id + "'");
  };
  if (id.size() < 7 || id[0] != 'd') bad();
  const auto first = id.find('_');
  const auto last = id.rfind('_');
  if (first == std::string::npos || last == first) bad();
  try {
    c.depth = std::stoi(id.substr(1, first - 1));
    std::string scale = id.substr(first + 1, last - first - 1);
    if (scale == "x1") {
      c.scale_denominator = 1;
    } else if (scale.rfind("x1-", 0) == 0) {
      c.scale_denominator = std::stoi(scale.substr(3));
    } else {
      bad();
    }
  } catch (const std::logic_error&) {
    bad();
  }
  const std::string type = id.substr(last + 1);
  if (type == "std") {
    c.conv_type = ConvType::kStandard;
  } else if (type == "dw") {
    c.conv_type = ConvType::kDepthwiseSeparable;
  } else {
    bad();
  }
  Validate(c);
  return c;
}

std::vector<ArchConfig> EnumerateGrid() {
  std::vector<ArchConfig> grid;
  for (int depth : kDepths) {
    for (ConvType type : {ConvType::kStandard, ConvType::kDepthwiseSeparable}) {
      for (int denom : kScaleDenominators) {
        ArchConfig c;
        c.depth = depth;
        c.scale_denominator = denom;
        c.conv_type = type;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

std::string LayerKindName(LayerKind kind) { return KindNames().at(kind); }

LayerKind ParseLayerKind(const std::string& name) {
  for (const auto& [kind, n] : KindNames()) {
    if (n == name) return kind;
  }
  Fail(ErrorKind::kFormat, "unknown layer kind '" + name + "'");
}

bool HasWeights(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3x3:
    case LayerKind::kDepthwiseConv3x3:
    case LayerKind::kPointwiseConv1x1:
    case LayerKind::kConv1x1Out:
    case LayerKind::kTransposedConv2x2:
      return true;
    default:
      return false;
  }
}

bool IsElementwise(LayerKind kind) {
  return kind == LayerKind::kRelu || kind == LayerKind::kSigmoid ||
         kind == LayerKind::kBatchNorm;
}

Shape3 InferOutputShape(LayerKind kind, const Shape3& in, int filters,
                        const Shape3* skip) {
  Require(in.h > 0 && in.w > 0 && in.c > 0, ErrorKind::kShape,
          "layer input has an empty dimension");
  switch (kind) {
    case LayerKind::kConv3x3:
    case LayerKind::kPointwiseConv1x1:
      Require(filters > 0, ErrorKind::kShape, "convolution needs filters > 0");
      return {in.h, in.w, filters};
    case LayerKind::kConv1x1Out:
      Require(filters == 1, ErrorKind::kShape, "output conv has one filter");
      return {in.h, in.w, 1};
    case LayerKind::kDepthwiseConv3x3:
      Require(filters == in.c, ErrorKind::kShape,
              "depthwise conv preserves channels");
      return in;
    case LayerKind::kBatchNorm:
    case LayerKind::kRelu:
    case LayerKind::kSigmoid:
      return in;
    case LayerKind::kMaxPool2x2:
      Require(in.h % 2 == 0 && in.w % 2 == 0, ErrorKind::kShape,
              "max pooling needs even spatial dimensions");
      return {in.h / 2, in.w / 2, in.c};
    case LayerKind::kTransposedConv2x2:
      Require(filters > 0, ErrorKind::kShape,
              "transposed conv needs filters > 0");
      return {in.h * 2, in.w * 2, filters};
    case LayerKind::kConcat:
      Require(skip != nullptr, ErrorKind::kShape, "concat needs a skip source");
      Require(skip->h == in.h && skip->w == in.w, ErrorKind::kShape,
              "concat inputs differ spatially");
      return {in.h, in.w, in.c + skip->c};
  }
  Fail(ErrorKind::kShape, "unhandled layer kind");
}

LayerGraph AssembleGraph(const ArchConfig& config, const Shape3& input_shape,
                         std::vector<LayerSpec> layers) {
  LayerGraph g;
  g.config = config;
  g.input_shape = input_shape;
  Shape3 current = input_shape;
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = layers[i];
    Require(l.in_shape == current, ErrorKind::kShape,
            "layer " + std::to_string(i) + " input shape does not chain");
    const Shape3* skip = nullptr;
    if (l.kind == LayerKind::kConcat) {
      Require(l.skip_source.has_value() && *l.skip_source >= 0 &&
                  *l.skip_source < static_cast<int>(i),
              ErrorKind::kShape,
              "concat layer " + std::to_string(i) +
                  " needs an earlier skip source");
      skip = &layers[*l.skip_source].out_shape;
    } else {
      Require(!l.skip_source.has_value(), ErrorKind::kShape,
              "only concat layers carry a skip source");
    }
    Require(InferOutputShape(l.kind, l.in_shape, l.filters, skip) ==
                l.out_shape,
            ErrorKind::kShape,
            "layer " + std::to_string(i) + " output shape is inconsistent");
    current = l.out_shape;
  }
  g.layers = std::move(layers);
  g.param_count = CountParams(g);
  g.mac_count = CountMacs(g);
  return g;
}

LayerGraph BuildGraph(const ArchConfig& config) {
  Validate(config);
  const Shape3 input{config.input_h, config.input_w, config.input_c};
  GraphBuilder b(input);
  const int f0 = config.first_filters();
  std::vector<int> skips;
  for (int i = 0; i < config.depth - 1; ++i) {
    skips.push_back(b.ConvBlock(config.conv_type, f0 << i));
    b.Add(LayerKind::kMaxPool2x2);
  }
  b.ConvBlock(config.conv_type, f0 << (config.depth - 1));
  for (int i = config.depth - 2; i >= 0; --i) {
    b.Add(LayerKind::kTransposedConv2x2, f0 << i);
    b.Add(LayerKind::kConcat, 0, skips[i]);
    b.ConvBlock(config.conv_type, f0 << i);
  }
  b.Add(LayerKind::kConv1x1Out, 1);
  b.Add(LayerKind::kSigmoid);
  return AssembleGraph(config, input, b.Take());
}

ParamBreakdown LayerParams(const LayerSpec& l) {
  ParamBreakdown p;
  const int64_t cin = l.in_shape.c;
  const int64_t cout = l.out_shape.c;
  switch (l.kind) {
    case LayerKind::kConv3x3:
      p.weights = 9 * cin * cout;
      p.biases = cout;
      break;
    case LayerKind::kDepthwiseConv3x3:
      p.weights = 9 * cin;
      p.biases = cin;
      break;
    case LayerKind::kPointwiseConv1x1:
    case LayerKind::kConv1x1Out:
      p.weights = cin * cout;
      p.biases = cout;
      break;
    case LayerKind::kTransposedConv2x2:
      p.weights = 4 * cin * cout;
      p.biases = cout;
      break;
    case LayerKind::kBatchNorm:
      p.norm = 4 * cin;
      break;
    default:
      break;
  }
  return p;
}

int64_t LayerMacs(const LayerSpec& l) {
  const int64_t cin = l.in_shape.c;
  const int64_t cout = l.out_shape.c;
  const int64_t out_px = int64_t{l.out_shape.h} * l.out_shape.w;
  const int64_t in_px = int64_t{l.in_shape.h} * l.in_shape.w;
  switch (l.kind) {
    case LayerKind::kConv3x3:
      return out_px * 9 * cin * cout;
    case LayerKind::kDepthwiseConv3x3:
      return out_px * 9 * cin;
    case LayerKind::kPointwiseConv1x1:
    case LayerKind::kConv1x1Out:
      return out_px * cin * cout;
    case LayerKind::kTransposedConv2x2:
      return in_px * 4 * cin * cout;
    default:
      return 0;
  }
}

int64_t CountParams(const LayerGraph& graph) {
  int64_t total = 0;
  for (const auto& l : graph.layers) total += LayerParams(l).total();
  return total;
}

int64_t CountMacs(const LayerGraph& graph) {
  int64_t total = 0;
  for (const auto& l : graph.layers) total += LayerMacs(l);
  return total;
}

int64_t ParamsHundredthsOfThousand(int64_t params) {
  return (params + 5) / 10;
}

nlohmann::json ConfigToJson(const ArchConfig& c) {
  return {
      {"depth", c.depth},
      {"scale_denominator", c.scale_denominator},
      {"filter_scale", ScaleName(c.scale_denominator)},
      {"conv_type", ConvTypeName(c.conv_type)},
      {"input_h", c.input_h},
      {"input_w", c.input_w},
      {"input_c", c.input_c},
      {"base_filters", c.base_filters},
  };
}

ArchConfig ConfigFromJson(const nlohmann::json& j) {
  try {
    ArchConfig c;
    c.depth = j.at("depth").get<int>();
    c.scale_denominator = j.at("scale_denominator").get<int>();
    c.conv_type = ParseConvType(j.at("conv_type").get<std::string>());
    c.input_h = j.at("input_h").get<int>();
    c.input_w = j.at("input_w").get<int>();
    c.input_c = j.at("input_c").get<int>();
    c.base_filters = j.at("base_filters").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("bad config record: ") + e.what());
  }
}

namespace {

nlohmann::json ShapeToJson(const Shape3& s) { return {s.h, s.w, s.c}; }

Shape3 ShapeFromJson(const nlohmann::json& j) {
  Require(j.is_array() && j.size() == 3, ErrorKind::kFormat,
          "shape must be [h, w, c]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

nlohmann::json GraphToJson(const LayerGraph& g) {
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    nlohmann::json rec = {
        {"index", i},
        {"kind", LayerKindName(l.kind)},
        {"in", ShapeToJson(l.in_shape)},
        {"out", ShapeToJson(l.out_shape)},
        {"filters", l.filters},
    };
    if (l.skip_source) rec["skip_source"] = *l.skip_source;
    layers.push_back(std::move(rec));
  }
  return {
      {"config", ConfigToJson(g.config)},
      {"input", ShapeToJson(g.input_shape)},
      {"layers", std::move(layers)},
      {"param_count", g.param_count},
      {"mac_count", g.mac_count},
  };
}

LayerGraph GraphFromJson(const nlohmann::json& j) {
  try {
    ArchConfig config = ConfigFromJson(j.at("config"));
    Shape3 input = ShapeFromJson(j.at("input"));
    std::vector<LayerSpec> layers;
    for (const auto& rec : j.at("layers")) {
      LayerSpec l;
      l.kind = ParseLayerKind(rec.at("kind").get<std::string>());
      l.in_shape = ShapeFromJson(rec.at("in"));
      l.out_shape = ShapeFromJson(rec.at("out"));
      l.filters = rec.at("filters").get<int>();
      if (rec.contains("skip_source")) {
        l.skip_source = rec.at("skip_source").get<int>();
      }
      layers.push_back(l);
    }
    LayerGraph g = AssembleGraph(config, input, std::move(layers));
    if (j.contains("param_count")) {
      Require(j.at("param_count").get<int64_t>() == g.param_count,
              ErrorKind::kFormat, "declared param_count disagrees with layers");
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("bad graph record: ") + e.what());
  }
}

}  // namespace microseg::archgen
