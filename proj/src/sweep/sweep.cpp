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

#include "sweep/sweep.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "common/format.hpp"
#include "common/threads.hpp"
#include "quantization/quantize.hpp"

namespace microseg::sweep {

using archgen::ArchConfig;
using evaluation::LabelledImage;

namespace {

int ConvRank(archgen::ConvType t) {
  return t == archgen::ConvType::kStandard ? 0 : 1;
}

bool GridLess(const ArchConfig& a, const ArchConfig& b) {
  if (a.depth != b.depth) return a.depth > b.depth;
  if (a.conv_type != b.conv_type) return ConvRank(a.conv_type) < ConvRank(b.conv_type);
  return a.scale_denominator < b.scale_denominator;
}

SweepRow Estimate(const ArchConfig& c) {
  const auto g = archgen::BuildGraph(c);
  const auto f = archgen::EstimateResources(g, 4, 4);
  const auto q = archgen::EstimateResources(g, 1, 1);
  SweepRow row;
  row.config = c;
  row.id = archgen::ConfigId(c);
  row.params = f.params;
  row.macs = f.macs;
  row.flash_float = f.flash_bytes;
  row.flash_int8 = q.flash_bytes;
  row.peak_float = f.peak_activation_bytes;
  row.peak_int8 = q.peak_activation_bytes;
  return row;
}

void RunPipeline(SweepRow& row, const std::vector<LabelledImage>& train,
                 const std::vector<LabelledImage>& val,
                 const std::vector<LabelledImage>& test,
                 const SweepOptions& o, int train_workers) {
  const auto g = archgen::BuildGraph(row.config);
  auto cfg = o.train;
  cfg.workers = train_workers;
  const auto trained = training::Train(g, train, val, cfg, training::TverskyParams{});
  row.best_epoch = trained.best_epoch;
  const auto& params = trained.best_params;

  const auto& calib_src = val.empty() ? train : val;
  std::vector<const tensorops::Tensor<float>*> calib;
  for (size_t i = 0; i < calib_src.size() && i < o.calibration_samples; ++i) {
    calib.push_back(calib_src[i].image);
  }
  const auto qm = quantization::QuantizeModel(
      g, params, quantization::Calibrate(g, params, calib));

  const auto& eval_split = test.empty() ? val : test;
  const auto fe = evaluation::EvaluateSplit(
      [&](const tensorops::Tensor<float>& x) {
        return tensorops::ModelForward<float>(g, params, x,
                                              tensorops::Mode::kInference, nullptr);
      },
      eval_split, o.threshold, evaluation::Aggregation::kMicro, train_workers);
  const auto qe = evaluation::EvaluateSplit(
      [&](const tensorops::Tensor<float>& x) {
        return quantization::QuantizedForward(qm, x);
      },
      eval_split, o.threshold, evaluation::Aggregation::kMicro, train_workers);
  row.f1_float = fe.record.f1;
  row.miou_float = fe.record.miou;
  row.f1_int8 = qe.record.f1;
  row.miou_int8 = qe.record.miou;
}

std::string Cell(const std::optional<double>& v) {
  return v ? FormatNumber(*v) : "NA";
}

nlohmann::json JsonCell(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::vector<ArchConfig> SelectConfigs(const std::vector<std::string>& ids) {
  std::vector<ArchConfig> out;
  if (ids.empty()) {
    out = archgen::EnumerateGrid();
  } else {
    std::set<std::string> seen;
    for (const auto& id : ids) {
      Require(seen.insert(id).second, ErrorKind::kInvalidArgument,
              "config '" + id + "' listed twice");
      out.push_back(archgen::ParseConfigId(id));
      archgen::Validate(out.back());
    }
  }
  std::stable_sort(out.begin(), out.end(), GridLess);
  return out;
}

SweepResult RunSweep(const std::vector<dataio::SamplePair>& dataset,
                     const SweepOptions& o) {
  const auto configs = SelectConfigs(o.configs);
  SweepResult result;
  result.rows.resize(configs.size());

  std::vector<LabelledImage> train, val, test;
  if (!o.skip_train) {
    Require(!dataset.empty(), ErrorKind::kEmpty, "sweep needs a non-empty dataset");
    training::Validate(o.train);
    const auto splits = dataio::Split(dataset.size(), {0.70, 0.15, 0.15}, o.split_seed);
    train = dataio::Select(dataset, splits.train);
    val = dataio::Select(dataset, splits.val);
    test = dataio::Select(dataset, splits.test);
    if (o.train_limit > 0 && train.size() > o.train_limit) train.resize(o.train_limit);
  }

  const int slots = std::max(1, std::min<int>(o.workers, static_cast<int>(configs.size())));
  const int inner = slots > 1 ? 1 : std::max(1, o.workers);
  ParallelFor(configs.size(), slots, [&](size_t i) {
    SweepRow& row = result.rows[i];
    row = Estimate(configs[i]);
    if (o.skip_train) {
      row.status = "estimated";
      return;
    }
    try {
      RunPipeline(row, train, val, test, o, inner);
    } catch (const std::exception& e) {
      row.f1_float = row.miou_float = row.f1_int8 = row.miou_int8 = std::nullopt;
      row.status = std::string("error: ") + e.what();
    }
  });
  MarkPareto(result.rows);
  result.divergence_note = DivergenceNote(result.rows);
  return result;
}

void MarkPareto(std::vector<SweepRow>& rows) {
  for (auto& r : rows) {
    r.pareto = false;
    if (!r.f1_int8) continue;
    bool dominated = false;
    for (const auto& s : rows) {
      if (&s == &r || !s.f1_int8) continue;
      const bool no_worse = *s.f1_int8 >= *r.f1_int8 && s.flash_int8 <= r.flash_int8;
      const bool better = *s.f1_int8 > *r.f1_int8 || s.flash_int8 < r.flash_int8;
      if (no_worse && better) {
        dominated = true;
        break;
      }
    }
    r.pareto = !dominated;
  }
}

std::string DivergenceNote(const std::vector<SweepRow>& rows) {
  const std::string ref = "d4_x1-4_dw";
  for (const auto& r : rows) {
    if (r.id != ref) continue;
    if (r.pareto) return "";
    if (!r.f1_int8) return "divergence: reference point " + ref + " has no int8 result";
    return "divergence: reference point " + ref +
           " is not on the (int8 F1, int8 flash) Pareto front";
  }
  return "divergence: reference point " + ref + " was not part of this sweep";
}

const std::vector<std::string>& SweepColumns() {
  static const std::vector<std::string> cols = {
      "config",      "depth",      "scale",     "conv",     "params",
      "macs",        "flash_float", "flash_int8", "peak_float", "peak_int8",
      "f1_float",    "miou_float", "f1_int8",   "miou_int8", "best_epoch",
      "pareto",      "status"};
  return cols;
}

std::string SweepCsv(const SweepResult& result) {
  std::ostringstream os;
  const auto& cols = SweepColumns();
  for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : result.rows) {
    const bool trained = r.f1_int8.has_value();
    os << r.id << ',' << r.config.depth << ',' << archgen::ScaleName(r.config.scale_denominator)
       << ',' << archgen::ConvTypeName(r.config.conv_type) << ',' << r.params << ','
       << r.macs << ',' << r.flash_float << ',' << r.flash_int8 << ',' << r.peak_float
       << ',' << r.peak_int8 << ',' << Cell(r.f1_float) << ',' << Cell(r.miou_float)
       << ',' << Cell(r.f1_int8) << ',' << Cell(r.miou_int8) << ','
       << (trained ? std::to_string(r.best_epoch) : "NA") << ',' << (r.pareto ? 1 : 0)
       << ',' << CsvQuote(r.status) << '\n';
  }
  return os.str();
}

nlohmann::json SweepJson(const SweepResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    const bool trained = r.f1_int8.has_value();
    rows.push_back({{"config", r.id},
                    {"depth", r.config.depth},
                    {"scale", archgen::ScaleName(r.config.scale_denominator)},
                    {"conv", archgen::ConvTypeName(r.config.conv_type)},
                    {"params", r.params},
                    {"macs", r.macs},
                    {"flash_float", r.flash_float},
                    {"flash_int8", r.flash_int8},
                    {"peak_float", r.peak_float},
                    {"peak_int8", r.peak_int8},
                    {"f1_float", JsonCell(r.f1_float)},
                    {"miou_float", JsonCell(r.miou_float)},
                    {"f1_int8", JsonCell(r.f1_int8)},
                    {"miou_int8", JsonCell(r.miou_int8)},
                    {"best_epoch", trained ? nlohmann::json(r.best_epoch) : nlohmann::json(nullptr)},
                    {"pareto", r.pareto},
                    {"status", r.status}});
  }
  return {{"columns", SweepColumns()},
          {"rows", rows},
          {"divergence_note", result.divergence_note}};
}

}  // namespace microseg::sweep
