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

// microseg command-line tool. Talks to the engine only through the C API.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "microseg/microseg.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitShape = 5,
  kExitPrecision = 6,
  kExitNumeric = 7,
  kExitNotFound = 8,
  kExitEmpty = 9,
  kExitInternal = 10,
};

int ExitFor(ms_status s) {
  switch (s) {
    case MS_OK: return kExitOk;
    case MS_ERR_INVALID_ARGUMENT: return kExitUsage;
    case MS_ERR_IO: return kExitIo;
    case MS_ERR_FORMAT: return kExitFormat;
    case MS_ERR_SHAPE: return kExitShape;
    case MS_ERR_PRECISION: return kExitPrecision;
    case MS_ERR_NUMERIC: return kExitNumeric;
    case MS_ERR_NOT_FOUND: return kExitNotFound;
    case MS_ERR_EMPTY: return kExitEmpty;
    default: return kExitInternal;
  }
}

struct CommandError {
  int code;
  std::string message;
};

[[noreturn]] void Usage(const std::string& msg) { throw CommandError{kExitUsage, msg}; }

void Check(ms_status s) {
  if (s != MS_OK) throw CommandError{ExitFor(s), ms_last_error()};
}

struct CString {
  char* p = nullptr;
  ~CString() { ms_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct ModelDeleter {
  void operator()(ms_model* m) const { ms_model_free(m); }
};
struct DatasetDeleter {
  void operator()(ms_dataset* d) const { ms_dataset_free(d); }
};
using Model = std::unique_ptr<ms_model, ModelDeleter>;
using Dataset = std::unique_ptr<ms_dataset, DatasetDeleter>;

// ---- shared options ----

struct Globals {
  std::string workdir = ".";
  std::string config;
  uint64_t seed = 0;
  int threads = 0;
  bool no_timestamp = false;
  bool quiet = false;
};

struct ArchFlags {
  std::string id;
  int depth = 5;
  std::string scale = "1";
  std::string conv = "standard";
  int height = 96;
  int width = 96;
  int channels = 3;
  int base_filters = 64;
};

struct DataFlags {
  std::string data;
  size_t synth = 0;
  uint64_t synth_seed = 0;
  uint64_t split_seed = 0;
  bool center_crop = false;
};

struct TrainFlags {
  int epochs = 15;
  int batch = 8;
  double lr = 1e-4;
  size_t train_limit = 0;
  double threshold = 0.5;
};

Globals g;

fs::path Resolve(const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(g.workdir) / path;
}

void Log(const std::string& s) {
  if (!g.quiet) std::cerr << s << '\n';
}

// Writes through a temporary file renamed into place, so a failing command
// never leaves a partial artifact behind.
void WriteFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CommandError{kExitIo, "cannot write '" + path.string() + "'"};
    out << text;
    if (!out) throw CommandError{kExitIo, "write failed for '" + path.string() + "'"};
  }
  fs::rename(tmp, path);
}

void SaveModel(const ms_model* m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  Check(ms_model_save(m, tmp.string().c_str()));
  fs::rename(tmp, path);
}

std::string Timestamp() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void Stamp(json& j) {
  if (!g.no_timestamp) j["generated_at"] = Timestamp();
}

std::string Thousands(int64_t v) {
  std::string s = std::to_string(v < 0 ? -v : v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(i, ",");
  return v < 0 ? "-" + s : s;
}

int ParseScale(const std::string& text) {
  std::string s = text;
  if (!s.empty() && (s[0] == 'x' || s[0] == 'X')) s = s.substr(1);
  std::replace(s.begin(), s.end(), '-', '/');
  try {
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
      if (s.substr(0, slash) != "1") Usage("scale must look like 1/N, got '" + text + "'");
      return std::stoi(s.substr(slash + 1));
    }
    const double v = std::stod(s);
    if (v <= 0.0) Usage("scale must be positive, got '" + text + "'");
    const double d = 1.0 / v;
    if (std::fabs(d - std::round(d)) > 1e-9) Usage("scale must be 1/N, got '" + text + "'");
    return static_cast<int>(std::lround(d));
  } catch (const std::logic_error&) {
    Usage("cannot parse scale '" + text + "'");
  }
}

std::string GridListing() {
  CString grid;
  Check(ms_grid_json(&grid.p));
  std::ostringstream os;
  os << "valid configurations (depth 3|4|5, scale 1|1/2|1/4|1/8|1/16, "
        "conv standard|depthwise):";
  for (const auto& c : json::parse(grid.str())) os << ' ' << c.at("id").get<std::string>();
  return os.str();
}

ms_arch ArchFrom(const ArchFlags& f) {
  ms_arch a;
  ms_arch_default(&a);
  if (!f.id.empty()) {
    if (ms_arch_from_id(f.id.c_str(), &a) != MS_OK) {
      const std::string why = ms_last_error();
      Usage(why + "\n" + GridListing());
    }
  } else {
    a.depth = f.depth;
    a.scale_denominator = ParseScale(f.scale);
    if (f.conv == "standard" || f.conv == "std") {
      a.depthwise = 0;
    } else if (f.conv == "depthwise" || f.conv == "dw") {
      a.depthwise = 1;
    } else {
      Usage("--conv must be standard or depthwise, got '" + f.conv + "'");
    }
  }
  a.input_h = f.height;
  a.input_w = f.width;
  a.input_c = f.channels;
  a.base_filters = f.base_filters;
  if (ms_arch_validate(&a) != MS_OK) {
    const std::string why = ms_last_error();
    Usage(why + "\n" + GridListing());
  }
  return a;
}

void AddArchFlags(CLI::App* sub, ArchFlags& f) {
  sub->add_option("--id", f.id, "Config id such as d4_x1-4_dw (overrides the other arch flags)");
  sub->add_option("--depth", f.depth, "Conv blocks including the bottleneck: 3, 4 or 5");
  sub->add_option("--scale", f.scale, "Filter scale: 1, 1/2, 1/4, 1/8 or 1/16");
  sub->add_option("--conv", f.conv, "standard or depthwise");
  sub->add_option("--height", f.height, "Input height");
  sub->add_option("--width", f.width, "Input width");
  sub->add_option("--channels", f.channels, "Input channels");
  sub->add_option("--base-filters", f.base_filters, "Filters of the first block at scale 1");
}

void AddDataFlags(CLI::App* sub, DataFlags& f) {
  sub->add_option("--data", f.data, "Dataset root with images/ and masks/");
  sub->add_option("--synth", f.synth, "Use N synthetic crack images instead of --data");
  sub->add_option("--synth-seed", f.synth_seed, "Seed of the synthetic generator");
  sub->add_option("--split-seed", f.split_seed, "Seed of the 70/15/15 split");
  sub->add_flag("--center-crop", f.center_crop, "Crop the central window instead of resizing");
}

void AddTrainFlags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--batch", f.batch, "Batch size");
  sub->add_option("--lr", f.lr, "Adam learning rate");
  sub->add_option("--train-limit", f.train_limit, "Use at most N training samples (0 = all)");
  sub->add_option("--threshold", f.threshold, "Probability threshold for metrics");
}

Dataset LoadData(const DataFlags& f, const ms_arch& a, bool required = true) {
  if (!f.data.empty() && f.synth > 0) Usage("give either --data or --synth, not both");
  ms_dataset* ds = nullptr;
  if (f.synth > 0) {
    Check(ms_dataset_synth(f.synth, f.synth_seed, a.input_h, a.input_w, &ds));
  } else if (!f.data.empty()) {
    ms_load_options lo;
    ms_load_options_default(&lo);
    lo.height = a.input_h;
    lo.width = a.input_w;
    lo.center_crop = f.center_crop ? 1 : 0;
    lo.threads = g.threads;
    Check(ms_dataset_load(Resolve(f.data).string().c_str(), &lo, &ds));
  } else if (required) {
    Usage("a dataset is required: give --data DIR or --synth N");
  } else {
    return nullptr;
  }
  Dataset out(ds);
  CString warnings;
  Check(ms_dataset_warnings_json(ds, &warnings.p));
  for (const auto& w : json::parse(warnings.str())) Log("warning: " + w.get<std::string>());
  return out;
}

Model LoadModel(const std::string& path) {
  if (path.empty()) Usage("--model is required");
  ms_model* m = nullptr;
  Check(ms_model_load(Resolve(path).string().c_str(), &m));
  return Model(m);
}

ms_arch ModelArch(const ms_model* m) {
  ms_arch a;
  Check(ms_model_arch(m, &a));
  return a;
}

ms_train_options TrainOptions(const TrainFlags& f, const DataFlags& d) {
  ms_train_options o;
  ms_train_options_default(&o);
  o.learning_rate = f.lr;
  o.batch_size = f.batch;
  o.epochs = f.epochs;
  o.seed = g.seed;
  o.split_seed = d.split_seed;
  o.train_limit = f.train_limit;
  o.threshold = f.threshold;
  o.threads = g.threads;
  return o;
}

std::string EstimateText(const json& e) {
  std::ostringstream os;
  os << "config                 " << e.at("id").get<std::string>() << '\n'
     << "params                 " << Thousands(e.at("params")) << '\n'
     << "macs                   " << Thousands(e.at("macs")) << '\n'
     << "flash float32 (bytes)  " << Thousands(e["float32"]["flash_bytes"]) << '\n'
     << "flash int8 (bytes)     " << Thousands(e["int8"]["flash_bytes"]) << '\n'
     << "peak RAM float32       " << Thousands(e["float32"]["peak_activation_bytes"]) << '\n'
     << "peak RAM int8          " << Thousands(e["int8"]["peak_activation_bytes"]) << '\n';
  return os.str();
}

// ---- config file ----

// Options left unset on the command line take their value from the JSON
// config: keys are long option names without dashes, either at top level
// or inside an object named after the subcommand (which wins).
void ApplyConfig(CLI::App& app, CLI::App* sub) {
  if (g.config.empty()) return;
  std::ifstream in(Resolve(g.config));
  if (!in) throw CommandError{kExitNotFound, "cannot open config file '" + g.config + "'"};
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw CommandError{kExitFormat, "config file: " + std::string(e.what())};
  }
  if (!cfg.is_object()) throw CommandError{kExitFormat, "config file must hold a JSON object"};
  auto lookup = [&](const std::string& key) -> const json* {
    if (sub != nullptr && cfg.contains(sub->get_name()) && cfg[sub->get_name()].is_object() &&
        cfg[sub->get_name()].contains(key)) {
      return &cfg[sub->get_name()][key];
    }
    return cfg.contains(key) ? &cfg[key] : nullptr;
  };
  for (CLI::App* a : {&app, sub}) {
    if (a == nullptr) continue;
    for (CLI::Option* opt : a->get_options()) {
      const std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames()[0];
      if (name.empty() || name == "help" || name == "config" || opt->count() > 0) continue;
      const json* v = lookup(name);
      if (v == nullptr) continue;
      std::string text;
      if (v->is_string()) {
        text = v->get<std::string>();
      } else if (v->is_boolean()) {
        text = v->get<bool>() ? "true" : "false";
      } else if (v->is_number()) {
        text = v->dump();
      } else {
        throw CommandError{kExitFormat, "config key '" + name + "' must be a scalar"};
      }
      try {
        opt->add_result(text);
        opt->run_callback();
      } catch (const CLI::Error& e) {
        throw CommandError{kExitUsage, "config key '" + name + "': " + e.what()};
      }
    }
  }
}

// ---- commands ----

struct GenerateCmd {
  ArchFlags arch;
  bool estimate = false;
  bool json_out = false;
  std::string out;

  void Run() const {
    const ms_arch a = ArchFrom(arch);
    if (estimate) {
      CString e;
      Check(ms_estimate_json(&a, &e.p));
      std::cout << (json_out ? json::parse(e.str()).dump(2) + "\n" : EstimateText(json::parse(e.str())));
    }
    if (!out.empty() || !estimate) {
      ms_model* m = nullptr;
      Check(ms_model_generate(&a, g.seed, &m));
      Model model(m);
      const fs::path path = Resolve(out.empty() ? "model.msm" : out);
      SaveModel(model.get(), path);
      Log("wrote " + path.string());
    }
  }
};

struct EstimateCmd {
  ArchFlags arch;
  std::string model;
  bool all = false;
  bool json_out = false;

  void Run() const {
    if (all) {
      CString grid;
      Check(ms_grid_json(&grid.p));
      json rows = json::array();
      std::ostringstream csv;
      csv << "config,params,macs,flash_float,flash_int8,peak_float,peak_int8\n";
      for (const auto& c : json::parse(grid.str())) {
        ms_arch a;
        Check(ms_arch_from_id(c.at("id").get<std::string>().c_str(), &a));
        CString e;
        Check(ms_estimate_json(&a, &e.p));
        json j = json::parse(e.str());
        j.erase("layers");
        csv << j["id"].get<std::string>() << ',' << j["params"] << ',' << j["macs"] << ','
            << j["float32"]["flash_bytes"] << ',' << j["int8"]["flash_bytes"] << ','
            << j["float32"]["peak_activation_bytes"] << ','
            << j["int8"]["peak_activation_bytes"] << '\n';
        rows.push_back(j);
      }
      std::cout << (json_out ? rows.dump(2) + "\n" : csv.str());
      return;
    }
    CString e;
    if (!model.empty()) {
      Model m = LoadModel(model);
      Check(ms_model_info_json(m.get(), &e.p));
    } else {
      const ms_arch a = ArchFrom(arch);
      Check(ms_estimate_json(&a, &e.p));
    }
    const json j = json::parse(e.str());
    std::cout << (json_out ? j.dump(2) + "\n" : EstimateText(j));
  }
};

void PrintEpoch(const ms_epoch* e, void*) {
  if (g.quiet) return;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "epoch %2d  train_loss %.5f  val_loss %.5f  val_f1 %.4f  val_miou %.4f",
                e->epoch, e->train_loss, e->val_loss, e->val_f1, e->val_miou);
  std::cerr << buf << '\n';
}

struct TrainCmd {
  ArchFlags arch;
  DataFlags data;
  TrainFlags train;
  std::string init;
  std::string out = "model.msm";
  std::string final_out;
  std::string history = "history.csv";

  void Run() const {
    Model model;
    if (!init.empty()) {
      model = LoadModel(init);
    } else {
      const ms_arch a = ArchFrom(arch);
      ms_model* m = nullptr;
      Check(ms_model_generate(&a, g.seed, &m));
      model.reset(m);
    }
    Dataset ds = LoadData(data, ModelArch(model.get()));
    const ms_train_options o = TrainOptions(train, data);
    ms_model* best = nullptr;
    ms_model* last = nullptr;
    CString hist;
    Check(ms_train(model.get(), ds.get(), &o, PrintEpoch, nullptr, &best,
                   final_out.empty() ? nullptr : &last, &hist.p));
    Model best_model(best), last_model(last);
    SaveModel(best_model.get(), Resolve(out));
    if (last_model) SaveModel(last_model.get(), Resolve(final_out));
    if (!history.empty()) WriteFile(Resolve(history), hist.str());
    Log("wrote " + Resolve(out).string());
  }
};

const std::vector<std::string> kEvalColumns = {
    "config", "mode", "split", "aggregation", "threshold", "images", "params", "macs",
    "flash_bytes", "peak_activation_bytes", "precision", "recall", "f1", "miou",
    "crack_iou", "background_iou", "tp", "fp", "fn", "tn"};

std::string CsvValue(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  return v.dump();
}

struct EvalCmd {
  DataFlags data;
  std::string model;
  std::string split = "test";
  double threshold = 0.5;
  std::string aggregation = "micro";
  std::string expect;
  bool compare_int8 = false;
  size_t calib_samples = 64;
  std::string out = "metrics.json";
  std::string csv = "metrics.csv";
  std::string per_image;

  void Run() const {
    Model m = LoadModel(model);
    ms_precision p;
    Check(ms_model_precision(m.get(), &p));
    if (!expect.empty()) {
      const std::string have = p == MS_INT8 ? "int8" : "float32";
      const std::string want = expect == "float" ? "float32" : expect;
      if (want != "float32" && want != "int8") Usage("--precision must be float32 or int8");
      if (want != have) {
        throw CommandError{kExitPrecision, "model is " + have + " but --precision asks for " + want};
      }
    }
    if (compare_int8 && p == MS_INT8) {
      throw CommandError{kExitPrecision, "--compare-int8 needs a float32 model"};
    }
    Dataset ds = LoadData(data, ModelArch(m.get()));

    ms_eval_options o;
    ms_eval_options_default(&o);
    static const std::map<std::string, ms_split> kSplits = {
        {"test", MS_SPLIT_TEST}, {"val", MS_SPLIT_VAL}, {"train", MS_SPLIT_TRAIN}, {"all", MS_SPLIT_ALL}};
    if (!kSplits.count(split)) Usage("--split must be test, val, train or all");
    if (aggregation != "micro" && aggregation != "macro") Usage("--aggregation must be micro or macro");
    o.split = kSplits.at(split);
    o.split_seed = data.split_seed;
    o.threshold = threshold;
    o.macro = aggregation == "macro";
    o.threads = g.threads;

    json rows = json::array();
    CString rec, images;
    Check(ms_evaluate(m.get(), ds.get(), &o, &rec.p, per_image.empty() ? nullptr : &images.p));
    rows.push_back(json::parse(rec.str()));
    if (compare_int8) {
      ms_model* q = nullptr;
      Check(ms_quantize(m.get(), ds.get(), calib_samples, data.split_seed, &q, nullptr));
      Model qm(q);
      CString qrec;
      Check(ms_evaluate(qm.get(), ds.get(), &o, &qrec.p, nullptr));
      rows.push_back(json::parse(qrec.str()));
    }

    std::ostringstream table;
    for (size_t i = 0; i < kEvalColumns.size(); ++i) table << (i ? "," : "") << kEvalColumns[i];
    table << '\n';
    for (const auto& r : rows) {
      for (size_t i = 0; i < kEvalColumns.size(); ++i) {
        table << (i ? "," : "") << CsvValue(r.at(kEvalColumns[i]));
      }
      table << '\n';
    }
    json doc = {{"rows", rows}};
    Stamp(doc);
    if (!out.empty()) WriteFile(Resolve(out), doc.dump(2) + "\n");
    if (!csv.empty()) WriteFile(Resolve(csv), table.str());
    if (!per_image.empty()) WriteFile(Resolve(per_image), images.str());
    for (const auto& r : rows) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s %-7s f1 %.4f miou %.4f precision %.4f recall %.4f",
                    r["config"].get<std::string>().c_str(), r["mode"].get<std::string>().c_str(),
                    r["f1"].get<double>(), r["miou"].get<double>(),
                    r["precision"].get<double>(), r["recall"].get<double>());
      std::cout << buf << '\n';
    }
  }
};

struct QuantizeCmd {
  DataFlags data;
  std::string model;
  size_t calib_samples = 64;
  std::string out = "model_int8.msm";
  std::string report;

  void Run() const {
    Model m = LoadModel(model);
    Dataset ds = LoadData(data, ModelArch(m.get()));
    ms_model* q = nullptr;
    CString rep;
    Check(ms_quantize(m.get(), ds.get(), calib_samples, data.split_seed, &q,
                      report.empty() ? nullptr : &rep.p));
    Model qm(q);
    SaveModel(qm.get(), Resolve(out));
    if (!report.empty()) {
      json j = json::parse(rep.str());
      Stamp(j);
      WriteFile(Resolve(report), j.dump(2) + "\n");
    }
    Log("wrote " + Resolve(out).string());
  }
};

bool IsImage(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

struct InferCmd {
  std::string model;
  std::string input;
  std::string out_dir = "infer";
  double threshold = 0.5;
  bool center_crop = false;

  void Run() const {
    Model m = LoadModel(model);
    if (input.empty()) Usage("--input is required");
    const fs::path in = Resolve(input);
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && IsImage(e.path())) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw CommandError{kExitEmpty, "no images in '" + in.string() + "'"};
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw CommandError{kExitNotFound, "input '" + in.string() + "' does not exist"};
    }
    const fs::path dir = Resolve(out_dir);
    fs::create_directories(dir);
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const std::string overlay = (dir / (stem + "_overlay.ppm")).string();
      const std::string mask = (dir / (stem + "_mask.pgm")).string();
      Check(ms_infer_file(m.get(), f.string().c_str(), center_crop ? 1 : 0, threshold,
                          overlay.c_str(), mask.c_str()));
      Log("wrote " + overlay + " and " + mask);
    }
  }
};

struct SweepCmd {
  DataFlags data;
  TrainFlags train;
  std::string configs;
  bool skip_train = false;
  bool pareto = false;
  size_t calib_samples = 64;
  std::string csv = "sweep.csv";
  std::string json_path = "sweep.json";

  void Run() const {
    ms_arch a;
    ms_arch_default(&a);
    Dataset ds = LoadData(data, a, !skip_train);
    ms_sweep_options o;
    ms_sweep_options_default(&o);
    o.configs = configs.c_str();
    o.train = TrainOptions(train, data);
    o.skip_train = skip_train ? 1 : 0;
    o.calibration_samples = calib_samples;
    CString table, doc;
    Check(ms_sweep(ds.get(), &o, &table.p, &doc.p));
    json j = json::parse(doc.str());
    Stamp(j);
    if (!csv.empty()) WriteFile(Resolve(csv), table.str());
    if (!json_path.empty()) WriteFile(Resolve(json_path), j.dump(2) + "\n");
    std::cout << table.str();
    if (pareto) {
      std::cout << "pareto front (int8 F1 up, int8 flash down):";
      for (const auto& r : j["rows"]) {
        if (r["pareto"].get<bool>()) std::cout << ' ' << r["config"].get<std::string>();
      }
      std::cout << '\n';
      const std::string note = j["divergence_note"].get<std::string>();
      if (!note.empty()) std::cout << note << '\n';
    }
  }
};

struct SynthCmd {
  size_t n = 200;
  uint64_t synth_seed = 0;
  int height = 96;
  int width = 96;
  std::string out = "synth";
  std::string format = "png";

  void Run() const {
    ms_dataset* ds = nullptr;
    Check(ms_dataset_synth(n, synth_seed, height, width, &ds));
    Dataset d(ds);
    Check(ms_dataset_save(d.get(), Resolve(out).string().c_str(), format.c_str()));
    Log("wrote " + std::to_string(n) + " samples to " + Resolve(out).string());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microseg: lightweight U-Net crack segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", ms_version());
  app.add_option("--workdir", g.workdir, "Base directory for relative paths");
  app.add_option("--config", g.config, "JSON file supplying defaults for unset flags");
  app.add_option("--seed", g.seed, "Seed for initialization and shuffling");
  app.add_option("--threads", g.threads, "Worker threads (0 = auto; capped by MICROSEG_THREADS)");
  app.add_flag("--no-timestamp", g.no_timestamp, "Omit timestamps from JSON outputs");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");

  GenerateCmd gen;
  auto* c_gen = app.add_subcommand("generate", "Create a seeded random-init model file");
  AddArchFlags(c_gen, gen.arch);
  c_gen->add_flag("--estimate", gen.estimate, "Print the resource estimate");
  c_gen->add_flag("--json", gen.json_out, "Print the estimate as JSON");
  c_gen->add_option("--out", gen.out, "Model file to write (default model.msm)");

  EstimateCmd est;
  auto* c_est = app.add_subcommand("estimate", "Static params/MACs/flash/RAM estimate");
  AddArchFlags(c_est, est.arch);
  c_est->add_option("--model", est.model, "Estimate an existing model file");
  c_est->add_flag("--all", est.all, "Estimate every grid configuration");
  c_est->add_flag("--json", est.json_out, "Print JSON");

  TrainCmd tr;
  auto* c_tr = app.add_subcommand("train", "Train a float model with Focal Tversky loss");
  AddArchFlags(c_tr, tr.arch);
  AddDataFlags(c_tr, tr.data);
  AddTrainFlags(c_tr, tr.train);
  c_tr->add_option("--model", tr.init, "Initial model file (default: generate from arch flags)");
  c_tr->add_option("--out", tr.out, "Best-validation-F1 checkpoint");
  c_tr->add_option("--final-out", tr.final_out, "Last-epoch checkpoint");
  c_tr->add_option("--history", tr.history, "Per-epoch history CSV");

  EvalCmd ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate F1/mIoU on a dataset split");
  AddDataFlags(c_ev, ev.data);
  c_ev->add_option("--model", ev.model, "Model file");
  c_ev->add_option("--split", ev.split, "test, val, train or all");
  c_ev->add_option("--threshold", ev.threshold, "Probability threshold");
  c_ev->add_option("--aggregation", ev.aggregation, "micro or macro");
  c_ev->add_option("--precision", ev.expect, "Require the model to be float32 or int8");
  c_ev->add_flag("--compare-int8", ev.compare_int8, "Also quantize and evaluate the int8 model");
  c_ev->add_option("--calib-samples", ev.calib_samples, "Calibration samples for --compare-int8");
  c_ev->add_option("--out", ev.out, "Metrics JSON");
  c_ev->add_option("--csv", ev.csv, "Metrics CSV");
  c_ev->add_option("--per-image", ev.per_image, "Per-image confusion CSV");

  QuantizeCmd qu;
  auto* c_qu = app.add_subcommand("quantize", "Post-training int8 quantization");
  AddDataFlags(c_qu, qu.data);
  c_qu->add_option("--model", qu.model, "Float model file");
  c_qu->add_option("--calib-samples", qu.calib_samples, "Calibration samples from the validation split");
  c_qu->add_option("--out", qu.out, "Int8 model file");
  c_qu->add_option("--report", qu.report, "Per-edge scale/zero-point report JSON");

  InferCmd inf;
  auto* c_inf = app.add_subcommand("infer", "Write overlays and binary masks for images");
  c_inf->add_option("--model", inf.model, "Model file");
  c_inf->add_option("--input", inf.input, "Image file or directory");
  c_inf->add_option("--out-dir", inf.out_dir, "Output directory");
  c_inf->add_option("--threshold", inf.threshold, "Probability threshold");
  c_inf->add_flag("--center-crop", inf.center_crop, "Crop the central window instead of resizing");

  SweepCmd sw;
  auto* c_sw = app.add_subcommand("sweep", "Train, quantize and evaluate grid configurations");
  AddDataFlags(c_sw, sw.data);
  AddTrainFlags(c_sw, sw.train);
  c_sw->add_option("--configs", sw.configs, "Comma-separated config ids (default: all 30)");
  c_sw->add_flag("--skip-train", sw.skip_train, "Estimates only");
  c_sw->add_flag("--pareto", sw.pareto, "Print the Pareto front and divergence note");
  c_sw->add_option("--calib-samples", sw.calib_samples, "Calibration samples per config");
  c_sw->add_option("--csv", sw.csv, "Sweep CSV");
  c_sw->add_option("--json", sw.json_path, "Sweep JSON");

  SynthCmd sy;
  auto* c_sy = app.add_subcommand("synth", "Write a synthetic crack dataset");
  c_sy->add_option("--n", sy.n, "Number of samples");
  c_sy->add_option("--synth-seed", sy.synth_seed, "Generator seed");
  c_sy->add_option("--height", sy.height, "Image height");
  c_sy->add_option("--width", sy.width, "Image width");
  c_sy->add_option("--out", sy.out, "Output root");
  c_sy->add_option("--format", sy.format, "png or pnm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    ApplyConfig(app, sub);
    if (sub == c_gen) gen.Run();
    if (sub == c_est) est.Run();
    if (sub == c_tr) tr.Run();
    if (sub == c_ev) ev.Run();
    if (sub == c_qu) qu.Run();
    if (sub == c_inf) inf.Run();
    if (sub == c_sw) sw.Run();
    if (sub == c_sy) sy.Run();
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFormat;
  }
  return kExitOk;
}
