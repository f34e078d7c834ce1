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

#include "microseg/microseg.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "archgen/archgen.hpp"
#include "common/error.hpp"
#include "common/threads.hpp"
#include "dataio/dataset.hpp"
#include "dataio/image_io.hpp"
#include "dataio/model_file.hpp"
#include "evaluation/metrics.hpp"
#include "quantization/quantize.hpp"
#include "sweep/sweep.hpp"
#include "training/trainer.hpp"

using namespace microseg;
using archgen::Precision;
using tensorops::Tensor;

struct ms_model {
  dataio::ModelFile file;
};

struct ms_dataset {
  std::vector<dataio::SamplePair> samples;
  std::vector<std::string> warnings;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ms_status Guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<ms_status>(static_cast<int>(e.kind()));
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return MS_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MS_ERR_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  Require(p != nullptr, ErrorKind::kInvalidArgument, std::string(what) + " is NULL");
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Emit(char** out, const std::string& s) {
  if (out != nullptr) *out = Dup(s);
}

archgen::ArchConfig ToConfig(const ms_arch& a) {
  archgen::ArchConfig c;
  c.depth = a.depth;
  c.scale_denominator = a.scale_denominator;
  c.conv_type = a.depthwise ? archgen::ConvType::kDepthwiseSeparable
                            : archgen::ConvType::kStandard;
  c.input_h = a.input_h;
  c.input_w = a.input_w;
  c.input_c = a.input_c;
  c.base_filters = a.base_filters;
  return c;
}

ms_arch FromConfig(const archgen::ArchConfig& c) {
  ms_arch a;
  a.depth = c.depth;
  a.scale_denominator = c.scale_denominator;
  a.depthwise = c.conv_type == archgen::ConvType::kDepthwiseSeparable ? 1 : 0;
  a.input_h = c.input_h;
  a.input_w = c.input_w;
  a.input_c = c.input_c;
  a.base_filters = c.base_filters;
  return a;
}

nlohmann::json EstimateJson(const archgen::LayerGraph& g) {
  const auto f = archgen::EstimateResources(g, 4, 4);
  const auto q = archgen::EstimateResources(g, 1, 1);
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < g.layers.size(); ++i) {
    const auto& l = g.layers[i];
    const auto& r = q.per_layer[i];
    layers.push_back({{"index", i},
                      {"kind", archgen::LayerKindName(l.kind)},
                      {"out_shape", {l.out_shape.h, l.out_shape.w, l.out_shape.c}},
                      {"filters", l.filters},
                      {"params", r.params},
                      {"macs", r.macs},
                      {"output_elements", r.output_bytes},
                      {"live_elements", r.live_bytes}});
  }
  auto width = [](const archgen::ResourceEstimate& e) {
    return nlohmann::json{{"flash_bytes", e.flash_bytes},
                          {"peak_activation_bytes", e.peak_activation_bytes},
                          {"largest_tensor_bytes", e.largest_tensor_bytes}};
  };
  return {{"id", archgen::ConfigId(g.config)},
          {"config", archgen::ConfigToJson(g.config)},
          {"params", f.params},
          {"macs", f.macs},
          {"float32", width(f)},
          {"int8", width(q)},
          {"layers", layers}};
}

void CheckDatasetShape(const archgen::LayerGraph& g,
                       const std::vector<dataio::SamplePair>& samples) {
  const auto& s = g.input_shape;
  for (const auto& p : samples) {
    Require(p.image.h() == s.h && p.image.w() == s.w && p.image.c() == s.c,
            ErrorKind::kShape,
            "sample '" + p.name + "' is " + std::to_string(p.image.h()) + "x" +
                std::to_string(p.image.w()) + "x" + std::to_string(p.image.c()) +
                " but the model expects " + std::to_string(s.h) + "x" +
                std::to_string(s.w) + "x" + std::to_string(s.c));
  }
}

void RequireFloat(const ms_model* m, const char* op) {
  Require(m->file.precision == Precision::kFloat32, ErrorKind::kPrecision,
          std::string(op) + " needs a float32 model, got an int8 model");
}

Tensor<float> Predict(const dataio::ModelFile& f, const Tensor<float>& x) {
  if (f.precision == Precision::kInt8) return quantization::QuantizedForward(f.quantized, x);
  return tensorops::ModelForward<float>(f.graph, f.params, x);
}

training::TrainConfig ToTrainConfig(const ms_train_options& o) {
  training::TrainConfig c;
  c.learning_rate = o.learning_rate;
  c.batch_size = o.batch_size;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.threshold = o.threshold;
  c.workers = ResolveWorkers(o.threads);
  return c;
}

ms_model* Wrap(dataio::ModelFile f) {
  auto* m = new ms_model;
  m->file = std::move(f);
  return m;
}

}  // namespace

extern "C" {

const char* ms_version(void) { return "1.0.0"; }

const char* ms_status_name(ms_status s) {
  switch (s) {
    case MS_OK: return "ok";
    case MS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MS_ERR_IO: return "i/o error";
    case MS_ERR_FORMAT: return "format error";
    case MS_ERR_SHAPE: return "shape mismatch";
    case MS_ERR_PRECISION: return "precision mismatch";
    case MS_ERR_NUMERIC: return "numeric failure";
    case MS_ERR_NOT_FOUND: return "not found";
    case MS_ERR_EMPTY: return "empty input";
    case MS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ms_last_error(void) { return g_last_error.c_str(); }

void ms_string_free(char* s) { std::free(s); }

void ms_arch_default(ms_arch* arch) {
  if (arch != nullptr) *arch = FromConfig(archgen::ArchConfig{});
}

ms_status ms_arch_validate(const ms_arch* arch) {
  return Guard([&] {
    NotNull(arch, "arch");
    archgen::Validate(ToConfig(*arch));
  });
}

ms_status ms_arch_from_id(const char* id, ms_arch* arch) {
  return Guard([&] {
    NotNull(id, "id");
    NotNull(arch, "arch");
    const auto c = archgen::ParseConfigId(id);
    archgen::Validate(c);
    *arch = FromConfig(c);
  });
}

ms_status ms_grid_json(char** out_json) {
  return Guard([&] {
    NotNull(out_json, "out_json");
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& c : archgen::EnumerateGrid()) {
      auto j = archgen::ConfigToJson(c);
      j["id"] = archgen::ConfigId(c);
      grid.push_back(j);
    }
    Emit(out_json, grid.dump());
  });
}

ms_status ms_estimate_json(const ms_arch* arch, char** out_json) {
  return Guard([&] {
    NotNull(arch, "arch");
    NotNull(out_json, "out_json");
    Emit(out_json, EstimateJson(archgen::BuildGraph(ToConfig(*arch))).dump());
  });
}

ms_status ms_model_generate(const ms_arch* arch, uint64_t seed, ms_model** out) {
  return Guard([&] {
    NotNull(arch, "arch");
    NotNull(out, "out");
    const auto g = archgen::BuildGraph(ToConfig(*arch));
    *out = Wrap(dataio::FloatModel(g, tensorops::InitParams(g, seed)));
  });
}

ms_status ms_model_load(const char* path, ms_model** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = Wrap(dataio::LoadModel(path));
  });
}

ms_status ms_model_save(const ms_model* model, const char* path) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(path, "path");
    dataio::SaveModel(path, model->file);
  });
}

void ms_model_free(ms_model* model) { delete model; }

ms_status ms_model_precision(const ms_model* model, ms_precision* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = model->file.precision == Precision::kInt8 ? MS_INT8 : MS_FLOAT32;
  });
}

ms_status ms_model_arch(const ms_model* model, ms_arch* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = FromConfig(model->file.graph.config);
  });
}

ms_status ms_model_info_json(const ms_model* model, char** out_json) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out_json, "out_json");
    auto j = EstimateJson(model->file.graph);
    j["precision"] = archgen::PrecisionName(model->file.precision);
    j["file_bytes"] = archgen::ModelFileSize(model->file.graph, model->file.precision);
    Emit(out_json, j.dump());
  });
}

ms_status ms_model_predict(const ms_model* model, const float* images, size_t n,
                           float* out_probs) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(images, "images");
    NotNull(out_probs, "out_probs");
    Require(n > 0, ErrorKind::kEmpty, "no images to predict");
    const auto& s = model->file.graph.input_shape;
    const size_t in_px = static_cast<size_t>(s.h) * s.w * s.c;
    const size_t out_px = static_cast<size_t>(s.h) * s.w;
    for (size_t i = 0; i < n; ++i) {
      Tensor<float> x({1, s.h, s.w, s.c});
      std::memcpy(x.ptr(), images + i * in_px, in_px * sizeof(float));
      const auto y = Predict(model->file, x);
      std::memcpy(out_probs + i * out_px, y.ptr(), out_px * sizeof(float));
    }
  });
}

void ms_load_options_default(ms_load_options* opts) {
  if (opts == nullptr) return;
  opts->height = 96;
  opts->width = 96;
  opts->center_crop = 0;
  opts->threads = 0;
}

ms_status ms_dataset_load(const char* root, const ms_load_options* opts,
                          ms_dataset** out) {
  return Guard([&] {
    NotNull(root, "root");
    NotNull(out, "out");
    ms_load_options o;
    ms_load_options_default(&o);
    if (opts != nullptr) o = *opts;
    dataio::LoadOptions lo;
    lo.height = o.height;
    lo.width = o.width;
    lo.center_crop = o.center_crop != 0;
    lo.workers = ResolveWorkers(o.threads);
    auto loaded = dataio::LoadDataset(root, lo);
    auto* ds = new ms_dataset;
    ds->samples = std::move(loaded.samples);
    ds->warnings = std::move(loaded.warnings);
    *out = ds;
  });
}

ms_status ms_dataset_synth(size_t n, uint64_t seed, int height, int width,
                           ms_dataset** out) {
  return Guard([&] {
    NotNull(out, "out");
    Require(n > 0, ErrorKind::kInvalidArgument, "synthetic dataset size must be positive");
    dataio::SynthOptions so;
    so.height = height;
    so.width = width;
    auto* ds = new ms_dataset;
    ds->samples = dataio::SynthCracks(static_cast<int>(n), seed, so);
    *out = ds;
  });
}

ms_status ms_dataset_save(const ms_dataset* ds, const char* root, const char* format) {
  return Guard([&] {
    NotNull(ds, "dataset");
    NotNull(root, "root");
    dataio::SaveDataset(root, ds->samples, format != nullptr ? format : "png");
  });
}

size_t ms_dataset_size(const ms_dataset* ds) {
  return ds == nullptr ? 0 : ds->samples.size();
}

ms_status ms_dataset_warnings_json(const ms_dataset* ds, char** out_json) {
  return Guard([&] {
    NotNull(ds, "dataset");
    NotNull(out_json, "out_json");
    Emit(out_json, nlohmann::json(ds->warnings).dump());
  });
}

void ms_dataset_free(ms_dataset* ds) { delete ds; }

void ms_train_options_default(ms_train_options* opts) {
  if (opts == nullptr) return;
  const training::TrainConfig c;
  opts->learning_rate = c.learning_rate;
  opts->batch_size = c.batch_size;
  opts->epochs = c.epochs;
  opts->seed = c.seed;
  opts->split_seed = 0;
  opts->train_limit = 0;
  opts->threshold = c.threshold;
  opts->threads = 0;
}

ms_status ms_train(const ms_model* init, const ms_dataset* ds,
                   const ms_train_options* opts, ms_epoch_callback cb, void* user,
                   ms_model** out_best, ms_model** out_final, char** out_history_csv) {
  return Guard([&] {
    NotNull(init, "init");
    NotNull(ds, "dataset");
    NotNull(out_best, "out_best");
    RequireFloat(init, "training");
    ms_train_options o;
    ms_train_options_default(&o);
    if (opts != nullptr) o = *opts;
    const auto& g = init->file.graph;
    CheckDatasetShape(g, ds->samples);
    const auto splits = dataio::Split(ds->samples.size(), {0.70, 0.15, 0.15}, o.split_seed);
    auto train = dataio::Select(ds->samples, splits.train);
    const auto val = dataio::Select(ds->samples, splits.val);
    if (o.train_limit > 0 && train.size() > o.train_limit) train.resize(o.train_limit);
    auto result = training::Train(
        g, init->file.params, train, val, ToTrainConfig(o), training::TverskyParams{},
        [&](const training::EpochRecord& r) {
          if (cb == nullptr) return;
          const ms_epoch e{r.epoch, r.train_loss, r.val_loss, r.val_f1, r.val_miou};
          cb(&e, user);
        });
    const std::string history = training::HistoryCsv(result.history);
    ms_model* best = Wrap(dataio::FloatModel(g, std::move(result.best_params)));
    if (out_final != nullptr) {
      *out_final = Wrap(dataio::FloatModel(g, std::move(result.final_params)));
    }
    *out_best = best;
    Emit(out_history_csv, history);
  });
}

ms_status ms_quantize(const ms_model* float_model, const ms_dataset* ds,
                      size_t calibration_samples, uint64_t split_seed, ms_model** out,
                      char** out_report_json) {
  return Guard([&] {
    NotNull(float_model, "float_model");
    NotNull(ds, "dataset");
    NotNull(out, "out");
    RequireFloat(float_model, "quantization");
    Require(calibration_samples > 0, ErrorKind::kInvalidArgument,
            "calibration needs at least one sample");
    const auto& f = float_model->file;
    CheckDatasetShape(f.graph, ds->samples);
    const auto splits = dataio::Split(ds->samples.size(), {0.70, 0.15, 0.15}, split_seed);
    std::vector<size_t> idx = splits.val;
    if (idx.empty()) {
      idx.resize(ds->samples.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    std::vector<const Tensor<float>*> calib;
    for (size_t i = 0; i < idx.size() && i < calibration_samples; ++i) {
      calib.push_back(&ds->samples[idx[i]].image);
    }
    quantization::QuantizationReport report;
    auto qm = quantization::QuantizeModel(
        f.graph, f.params, quantization::Calibrate(f.graph, f.params, calib), &report);
    std::string report_text;
    if (out_report_json != nullptr) {
      auto j = quantization::ReportToJson(qm, report);
      j["calibration_samples"] = calib.size();
      report_text = j.dump(2);
    }
    *out = Wrap(dataio::Int8Model(std::move(qm)));
    Emit(out_report_json, report_text);
  });
}

void ms_eval_options_default(ms_eval_options* opts) {
  if (opts == nullptr) return;
  opts->split = MS_SPLIT_TEST;
  opts->split_seed = 0;
  opts->threshold = 0.5;
  opts->macro = 0;
  opts->threads = 0;
}

ms_status ms_evaluate(const ms_model* model, const ms_dataset* ds,
                      const ms_eval_options* opts, char** out_json,
                      char** out_per_image_csv) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(ds, "dataset");
    NotNull(out_json, "out_json");
    ms_eval_options o;
    ms_eval_options_default(&o);
    if (opts != nullptr) o = *opts;
    const auto& f = model->file;
    CheckDatasetShape(f.graph, ds->samples);
    std::vector<size_t> idx;
    const char* split_name = "all";
    if (o.split == MS_SPLIT_ALL) {
      idx.resize(ds->samples.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else {
      const auto s = dataio::Split(ds->samples.size(), {0.70, 0.15, 0.15}, o.split_seed);
      switch (o.split) {
        case MS_SPLIT_TRAIN: idx = s.train; split_name = "train"; break;
        case MS_SPLIT_VAL: idx = s.val; split_name = "val"; break;
        case MS_SPLIT_TEST: idx = s.test; split_name = "test"; break;
        default: Fail(ErrorKind::kInvalidArgument, "unknown split");
      }
    }
    const auto split = dataio::Select(ds->samples, idx);
    std::vector<std::string> names;
    for (size_t i : idx) names.push_back(ds->samples[i].name);
    Require(!split.empty(), ErrorKind::kEmpty,
            std::string("the ") + split_name + " split is empty");
    const auto agg = o.macro ? evaluation::Aggregation::kMacro : evaluation::Aggregation::kMicro;
    const auto ev = evaluation::EvaluateSplit(
        [&](const Tensor<float>& x) { return Predict(f, x); }, split, o.threshold, agg,
        ResolveWorkers(o.threads));
    const auto& r = ev.record;
    const int width = f.precision == Precision::kInt8 ? 1 : 4;
    const auto est = archgen::EstimateResources(f.graph, width, width);
    nlohmann::json j = {
        {"config", archgen::ConfigId(f.graph.config)},
        {"mode", archgen::PrecisionName(f.precision)},
        {"split", split_name},
        {"aggregation", o.macro ? "macro" : "micro"},
        {"threshold", o.threshold},
        {"images", r.images},
        {"precision", r.precision},
        {"recall", r.recall},
        {"f1", r.f1},
        {"miou", r.miou},
        {"crack_iou", r.per_class_iou[0]},
        {"background_iou", r.per_class_iou[1]},
        {"tp", r.counts.tp},
        {"fp", r.counts.fp},
        {"fn", r.counts.fn},
        {"tn", r.counts.tn},
        {"params", est.params},
        {"macs", est.macs},
        {"flash_bytes", est.flash_bytes},
        {"peak_activation_bytes", est.peak_activation_bytes}};
    std::string csv;
    if (out_per_image_csv != nullptr) csv = evaluation::PerImageCsv(ev.per_image, names);
    Emit(out_json, j.dump());
    Emit(out_per_image_csv, csv);
  });
}

ms_status ms_infer_file(const ms_model* model, const char* image_path, int center_crop,
                        double threshold, const char* overlay_path, const char* mask_path) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(image_path, "image_path");
    const auto& s = model->file.graph.input_shape;
    Require(s.c == 3, ErrorKind::kShape, "image inference needs a 3-channel model");
    dataio::Image8 img = dataio::ReadImage(image_path);
    if (center_crop) img = dataio::CenterCrop(img, s.h, s.w);
    const auto x = dataio::ImageToTensor(img, s.h, s.w);
    const auto probs = Predict(model->file, x);
    if (overlay_path != nullptr) {
      dataio::WritePnm(overlay_path, dataio::OverlayMask(x, probs, threshold));
    }
    if (mask_path != nullptr) {
      dataio::WritePnm(mask_path, dataio::BinaryMask(probs, threshold));
    }
  });
}

void ms_sweep_options_default(ms_sweep_options* opts) {
  if (opts == nullptr) return;
  opts->configs = nullptr;
  ms_train_options_default(&opts->train);
  opts->skip_train = 0;
  opts->calibration_samples = 64;
}

ms_status ms_sweep(const ms_dataset* ds, const ms_sweep_options* opts, char** out_csv,
                   char** out_json) {
  return Guard([&] {
    ms_sweep_options o;
    ms_sweep_options_default(&o);
    if (opts != nullptr) o = *opts;
    sweep::SweepOptions so;
    if (o.configs != nullptr) {
      std::stringstream ss(o.configs);
      std::string id;
      while (std::getline(ss, id, ',')) {
        if (!id.empty()) so.configs.push_back(id);
      }
    }
    so.train = ToTrainConfig(o.train);
    so.train_limit = o.train.train_limit;
    so.skip_train = o.skip_train != 0;
    so.calibration_samples = o.calibration_samples;
    so.threshold = o.train.threshold;
    so.split_seed = o.train.split_seed;
    so.workers = so.train.workers;
    if (!so.skip_train) NotNull(ds, "dataset");
    static const std::vector<dataio::SamplePair> kNone;
    const auto result = sweep::RunSweep(ds != nullptr ? ds->samples : kNone, so);
    Emit(out_csv, sweep::SweepCsv(result));
    Emit(out_json, sweep::SweepJson(result).dump(2));
  });
}

}  // extern "C"
