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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "archgen/archgen.hpp"
#include "archgen/model_layout.hpp"
#include "common/threads.hpp"
#include "dataio/dataset.hpp"
#include "dataio/model_file.hpp"
#include "evaluation/metrics.hpp"
#include "quantization/quantize.hpp"
#include "sweep/sweep.hpp"
#include "tensorops/model.hpp"
#include "training/loss.hpp"
#include "training/trainer.hpp"
#include "../unit/test_util.hpp"

using namespace microseg;
using archgen::LayerKind;
using tensorops::ForwardCache;
using tensorops::Mode;
using tensorops::ModelParams;
using tensorops::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome ParamCounts() {
  const std::map<std::string, int64_t> reference = {
      {"d5_x1_std", 3103175},  {"d5_x1-2_std", 776010}, {"d5_x1-4_std", 194111},
      {"d5_x1-8_std", 48582},  {"d5_x1-16_std", 12173}, {"d5_x1_dw", 422269},
      {"d5_x1-2_dw", 106688},  {"d5_x1-4_dw", 27234},   {"d5_x1-8_dw", 7090},
      {"d5_x1-16_dw", 1915},   {"d4_x1_std", 769735},   {"d4_x1-2_std", 192560},
      {"d4_x1-4_std", 48203},  {"d4_x1-8_std", 12083},  {"d4_x1-16_std", 3037},
      {"d4_x1_dw", 105341},    {"d4_x1-2_dw", 26867},   {"d4_x1-4_dw", 6984},
      {"d4_x1-8_dw", 1881},    {"d4_x1-16_dw", 539},    {"d3_x1_std", 186285},
      {"d3_x1-2_std", 46653},  {"d3_x1-4_std", 11704},  {"d3_x1-8_std", 2947},
      {"d3_x1-16_std", 747},   {"d3_x1_dw", 25520},     {"d3_x1-2_dw", 6618},
      {"d3_x1-4_dw", 1774},    {"d3_x1-8_dw", 505},     {"d3_x1-16_dw", 158},
  };
  int matched = 0;
  std::string mismatches;
  for (const auto& c : archgen::EnumerateGrid()) {
    const std::string id = archgen::ConfigId(c);
    const int64_t got =
        archgen::ParamsHundredthsOfThousand(archgen::CountParams(archgen::BuildGraph(c)));
    if (reference.count(id) && reference.at(id) == got) {
      ++matched;
    } else {
      mismatches += " " + id;
    }
  }
  const int64_t base = archgen::CountParams(
      archgen::BuildGraph(archgen::ParseConfigId("d5_x1_std")));
  return {matched == 30 && base == 31031745,
          std::to_string(matched) + "/30 grid entries match, baseline " +
              std::to_string(base) + mismatches};
}

// ---------------------------------------------------------------------------

ModelParams<double> RandomParams(const archgen::LayerGraph& g, uint64_t seed) {
  auto p = tensorops::ZeroParams<double>(g);
  for (size_t i = 0; i < p.size(); ++i) {
    CounterRng rng(seed + 101 * i);
    for (auto& v : p[i].weights.vec()) v = rng.Uniform(-0.8, 0.8);
    for (auto& v : p[i].bias) v = rng.Uniform(-0.3, 0.3);
    for (auto& v : p[i].moving_var) v = rng.Uniform(0.5, 1.5);
  }
  return p;
}

double WorstGradientError(const archgen::LayerGraph& g, Mode mode, int batch, uint64_t seed) {
  auto params = RandomParams(g, seed);
  auto x = testing::RandomTensor<double>(
      {batch, g.input_shape.h, g.input_shape.w, g.input_shape.c}, seed + 7);
  const auto& os = g.output_shape();
  const auto r = testing::RandomTensor<double>({batch, os.h, os.w, os.c}, seed + 9);
  auto loss = [&] {
    const auto y = tensorops::ModelForward<double>(g, params, x, mode);
    double s = 0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  ForwardCache<double> cache;
  tensorops::ModelForward<double>(g, params, x, mode, &cache);
  const auto grads = tensorops::ModelBackward<double>(g, params, cache, r);
  double worst = 0;
  auto check = [&](double* v, double analytic) {
    worst = std::max(worst, testing::RelError(testing::CentralDifference(loss, v), analytic));
  };
  for (int64_t i = 0; i < x.size(); ++i) check(&x[i], grads.dx[i]);
  for (size_t l = 0; l < params.size(); ++l) {
    for (int64_t i = 0; i < params[l].weights.size(); ++i) check(&params[l].weights[i], grads.params[l].weights[i]);
    for (size_t i = 0; i < params[l].bias.size(); ++i) check(&params[l].bias[i], grads.params[l].bias[i]);
  }
  return worst;
}

Outcome Gradients() {
  const archgen::Shape3 in{4, 4, 3};
  struct Case {
    const char* name;
    archgen::LayerGraph g;
    Mode mode;
  };
  std::vector<archgen::LayerSpec> L;
  archgen::Shape3 cur = in;
  testing::Push(L, cur, LayerKind::kConv3x3, 2);
  testing::Push(L, cur, LayerKind::kConcat, 0, 0);
  std::vector<Case> cases = {
      {"conv3x3", testing::OneLayer(LayerKind::kConv3x3, in, 2), Mode::kInference},
      {"conv1x1", testing::OneLayer(LayerKind::kConv1x1Out, in, 1), Mode::kInference},
      {"depthwise", testing::OneLayer(LayerKind::kDepthwiseConv3x3, in, 3), Mode::kInference},
      {"pointwise", testing::OneLayer(LayerKind::kPointwiseConv1x1, in, 4), Mode::kInference},
      {"transposed", testing::OneLayer(LayerKind::kTransposedConv2x2, in, 2), Mode::kInference},
      {"maxpool", testing::OneLayer(LayerKind::kMaxPool2x2, in), Mode::kInference},
      {"relu", testing::OneLayer(LayerKind::kRelu, in), Mode::kInference},
      {"sigmoid", testing::OneLayer(LayerKind::kSigmoid, in), Mode::kInference},
      {"batchnorm", testing::OneLayer(LayerKind::kBatchNorm, in), Mode::kTraining},
      {"concat", archgen::AssembleGraph({}, in, L), Mode::kInference},
  };
  double layer_worst = 0;
  std::string worst_name;
  uint64_t seed = 1;
  for (auto& c : cases) {
    const double e = WorstGradientError(c.g, c.mode, 3, seed++);
    if (e > layer_worst) layer_worst = e, worst_name = c.name;
  }

  // Focal Tversky gradient.
  auto probs = testing::RandomTensor<double>({2, 5, 5, 1}, 50, 0.05, 0.95);
  const auto mask = testing::RandomMask<double>({2, 5, 5, 1}, 51);
  const auto res = training::FocalTverskyLoss(probs, mask, {});
  auto f = [&] { return training::FocalTverskyLoss(probs, mask, {}).loss; };
  double loss_worst = 0;
  for (int64_t i = 0; i < probs.size(); ++i) {
    loss_worst = std::max(loss_worst, testing::RelError(testing::CentralDifference(f, &probs[i]), res.grad[i]));
  }

  const double e2e = std::max(WorstGradientError(testing::TwoBlockUnet(4, 4, 2, false), Mode::kTraining, 2, 90),
                              WorstGradientError(testing::TwoBlockUnet(4, 4, 2, true), Mode::kTraining, 2, 91));
  const bool pass = layer_worst < 1e-6 && loss_worst < 1e-6 && e2e < 1e-5;
  return {pass, "worst layer " + Fmt("%.2e", layer_worst) + " (" + worst_name + "), loss " +
                    Fmt("%.2e", loss_worst) + ", two-block " + Fmt("%.2e", e2e)};
}

// ---------------------------------------------------------------------------

Outcome LossIdentities() {
  Tensor<float> mask({1, 16, 16, 1});
  CounterRng rng(3);
  for (auto& v : mask.vec()) v = rng.NextDouble() < 0.1 ? 1.0f : 0.0f;
  mask[0] = 1.0f;
  Tensor<float> wrong(mask.shape());
  for (int64_t i = 0; i < mask.size(); ++i) wrong[i] = 1.0f - mask[i];
  const double perfect = training::FocalTverskyLoss(mask, mask, {}).loss;
  const double bad = training::FocalTverskyLoss(wrong, mask, {}).loss;
  training::TverskyParams exact;
  exact.epsilon = 0.0;
  const double ones = training::FocalTverskyFromCounts({1, 1, 1}, exact);
  const double ones_err = std::fabs(ones - std::pow(0.5, 4.0 / 3.0));
  const bool pass = perfect <= 1e-5 && bad >= 1 - 1e-5 && ones_err <= 1e-9;
  return {pass, "perfect " + Fmt("%.3g", perfect) + ", fully wrong " + Fmt("%.9f", bad) +
                    ", TP=FP=FN=1 error " + Fmt("%.2e", ones_err) + " (eps 0)"};
}

// ---------------------------------------------------------------------------

Outcome MetricOracles() {
  int exact = 0;
  double identity = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const auto probs = testing::RandomTensor<float>({1, 16, 16, 1}, seed, 0, 1);
    const auto mask = testing::RandomMask<float>({1, 16, 16, 1}, seed + 500, 0.15);
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int64_t i = 0; i < 256; ++i) {
      const bool p = probs[i] >= 0.5f, g = mask[i] == 1.0f;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
      tn += !p && !g;
    }
    const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const double iou_c = tp + fp + fn ? double(tp) / (tp + fp + fn) : 1.0;
    const double iou_b = tn + fp + fn ? double(tn) / (tn + fp + fn) : 1.0;
    const auto m = evaluation::MetricsFromCounts(evaluation::Confusion(probs, mask, 0.5));
    const bool same = m.counts == evaluation::ConfusionCounts{tp, fp, fn, tn} &&
                      m.precision == prec && m.recall == rec &&
                      std::fabs(m.f1 - f1) <= 1e-12 && m.miou == (iou_c + iou_b) / 2;
    exact += same;
    if (tp + fp + fn > 0) {
      identity = std::max(identity, std::fabs(m.f1 - 2.0 * tp / (2.0 * tp + fp + fn)));
      identity = std::max(identity, std::fabs(m.per_class_iou[0] - m.f1 / (2 - m.f1)));
    }
  }
  return {exact == 100 && identity <= 1e-12,
          std::to_string(exact) + "/100 tallies exact, identity error " + Fmt("%.2e", identity)};
}

// ---------------------------------------------------------------------------

struct DemoData {
  std::vector<dataio::SamplePair> samples;
  dataio::DatasetSplits splits;
};

const DemoData& Synth200() {
  static const DemoData d = [] {
    DemoData x;
    x.samples = dataio::SynthCracks(200, 0);
    x.splits = dataio::Split(x.samples.size(), {0.70, 0.15, 0.15}, 0);
    return x;
  }();
  return d;
}

// Folds a following batch norm into a weighted layer.
std::vector<float> FoldedWeights(const archgen::LayerGraph& g, const ModelParams<float>& p, size_t i,
                                 std::vector<int>* out_channel) {
  const auto& l = g.layers[i];
  const auto& ws = p[i].weights.shape();
  std::vector<float> w(p[i].weights.vec());
  out_channel->resize(w.size());
  for (size_t k = 0; k < w.size(); ++k) {
    if (l.kind == LayerKind::kTransposedConv2x2) {
      (*out_channel)[k] = static_cast<int>((k / ws.c) % ws.w);
    } else if (l.kind == LayerKind::kDepthwiseConv3x3) {
      (*out_channel)[k] = static_cast<int>(k % ws.w);
    } else {
      (*out_channel)[k] = static_cast<int>(k % ws.c);
    }
  }
  if (i + 1 < g.layers.size() && g.layers[i + 1].kind == LayerKind::kBatchNorm) {
    const auto& bn = p[i + 1];
    for (size_t k = 0; k < w.size(); ++k) {
      const int c = (*out_channel)[k];
      w[k] = static_cast<float>(w[k] * (bn.weights[c] / std::sqrt(double(bn.moving_var[c]) + tensorops::kBatchNormEpsilon)));
    }
  }
  return w;
}

Outcome QuantizationFidelity(const std::string& models_dir) {
  const auto fl = dataio::LoadModel(models_dir + "/demo_d3_x1-16_dw.msm");
  const auto q8 = dataio::LoadModel(models_dir + "/demo_d3_x1-16_dw_int8.msm");
  const auto& g = fl.graph;
  const auto& qm = q8.quantized;
  const auto& data = Synth200();
  const auto val = dataio::Select(data.samples, data.splits.val);

  // Weights: every weighted layer, per output channel.
  double weight_ratio = 0;
  for (size_t i = 0; i < g.layers.size(); ++i) {
    if (!archgen::HasWeights(g.layers[i].kind)) continue;
    std::vector<int> oc;
    const auto w = FoldedWeights(g, fl.params, i, &oc);
    for (size_t k = 0; k < w.size(); ++k) {
      const float s = qm.layers[i].weight_scale[oc[k]];
      weight_ratio = std::max(weight_ratio, double(std::fabs(qm.layers[i].weights[k] * s - w[k]) / s));
    }
  }
  // Activations: every edge, values inside the representable range.
  double act_ratio = 0;
  for (const auto& s : val) {
    ForwardCache<float> cache;
    tensorops::ModelForward<float>(g, fl.params, *s.image, Mode::kInference, &cache);
    for (size_t e = 0; e < cache.outputs.size(); ++e) {
      const auto& qp = qm.activations[e];
      const float lo = quantization::DequantizeValue(-128, qp);
      const float hi = quantization::DequantizeValue(127, qp);
      for (float v : cache.outputs[e].vec()) {
        if (v < lo || v > hi) continue;
        const float back = quantization::DequantizeValue(quantization::QuantizeValue(v, qp), qp);
        act_ratio = std::max(act_ratio, double(std::fabs(back - v)) / qp.scale);
      }
    }
  }
  const auto f_eval = evaluation::EvaluateSplit(
      [&](const Tensor<float>& x) { return tensorops::ModelForward<float>(g, fl.params, x); }, val);
  const auto q_eval = evaluation::EvaluateSplit(
      [&](const Tensor<float>& x) { return quantization::QuantizedForward(qm, x); }, val);
  const double gap = std::fabs(q_eval.record.f1 - f_eval.record.f1);
  const bool pass = weight_ratio <= 0.5 + 1e-6 && act_ratio <= 0.5 + 1e-4 && gap <= 0.05;
  return {pass, "max weight error " + Fmt("%.4f", weight_ratio) + " steps, activation " +
                    Fmt("%.4f", act_ratio) + " steps; val F1 float " + Fmt("%.4f", f_eval.record.f1) +
                    " int8 " + Fmt("%.4f", q_eval.record.f1) + " gap " + Fmt("%.4f", gap)};
}

// ---------------------------------------------------------------------------

Outcome DeskTraining() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = archgen::BuildGraph(archgen::ParseConfigId("d3_x1-16_dw"));
  const auto& data = Synth200();
  training::TrainConfig cfg;
  cfg.workers = ResolveWorkers(0);
  const auto r = training::Train(g, dataio::Select(data.samples, data.splits.train),
                                 dataio::Select(data.samples, data.splits.val), cfg, {});
  const double f1 = r.history[r.best_epoch - 1].val_f1;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {f1 >= 0.5 && secs < 600,
          "params " + std::to_string(g.param_count) + ", best val F1 " + Fmt("%.4f", f1) +
              " at epoch " + std::to_string(r.best_epoch) + ", " + Fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------

Outcome ResourceSanity() {
  // Reference int8 flash in KB for the four largest standard-conv variants.
  const std::vector<std::pair<std::string, double>> largest = {
      {"d5_x1_std", 30522.7}, {"d5_x1-2_std", 7687.4}, {"d4_x1_std", 7616.4}, {"d5_x1-4_std", 1957.9}};
  bool pass = true;
  std::ostringstream d;
  for (const auto& [id, kb] : largest) {
    const auto g = archgen::BuildGraph(archgen::ParseConfigId(id));
    const auto e = archgen::EstimateResources(g, 1, 1);
    const bool ok = e.flash_bytes >= e.params && e.flash_bytes <= kb * 1000 * 1.05;
    pass &= ok;
    d << id << " " << e.flash_bytes << " B in [" << e.params << ", " << static_cast<int64_t>(kb * 1050)
      << "]" << (ok ? "" : " OUT") << "; ";
  }
  int small = 0;
  for (const auto& c : archgen::EnumerateGrid()) {
    const auto g = archgen::BuildGraph(c);
    if (g.param_count < 100000) {
      ++small;
      pass &= archgen::EstimateResources(g, 1, 1).flash_bytes >= g.param_count;
    }
  }
  d << small << " sub-100K models bounded below by params";
  return {pass, d.str()};
}

// ---------------------------------------------------------------------------

Outcome Determinism() {
  const auto g = archgen::BuildGraph(archgen::ParseConfigId("d3_x1-16_dw"));
  const auto data = dataio::SynthCracks(30, 4);
  const auto splits = dataio::Split(data.size(), {0.7, 0.15, 0.15}, 1);
  training::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  auto run = [&] {
    const auto r = training::Train(g, dataio::Select(data, splits.train),
                                   dataio::Select(data, splits.val), cfg, {});
    return std::make_pair(dataio::SerializeModel(dataio::FloatModel(g, r.best_params)),
                          training::HistoryCsv(r.history));
  };
  const auto a = run(), b = run();
  const bool gen = dataio::SerializeModel(dataio::FloatModel(g, tensorops::InitParams(g, 7))) ==
                   dataio::SerializeModel(dataio::FloatModel(g, tensorops::InitParams(g, 7)));
  sweep::SweepOptions so;
  so.configs = {"d3_x1-16_dw", "d3_x1-8_std"};
  so.train.epochs = 1;
  so.train_limit = 8;
  so.calibration_samples = 4;
  const auto sweep_data = dataio::SynthCracks(24, 2);
  const std::string s1 = sweep::SweepCsv(sweep::RunSweep(sweep_data, so));
  const std::string s2 = sweep::SweepCsv(sweep::RunSweep(sweep_data, so));
  const bool pass = a.first == b.first && a.second == b.second && gen && s1 == s2;
  return {pass, std::string("model files ") + (a.first == b.first ? "identical" : "differ") +
                    ", histories " + (a.second == b.second ? "identical" : "differ") +
                    ", generated files " + (gen ? "identical" : "differ") + ", sweep CSVs " +
                    (s1 == s2 ? "identical" : "differ")};
}

// ---------------------------------------------------------------------------

Outcome SweepOrdering() {
  sweep::SweepOptions o;
  o.skip_train = true;
  const auto rows = sweep::RunSweep({}, o).rows;
  bool pass = rows.size() == 30;
  int groups = 0;
  for (int depth : {3, 4, 5}) {
    for (auto conv : {archgen::ConvType::kStandard, archgen::ConvType::kDepthwiseSeparable}) {
      std::vector<const sweep::SweepRow*> group;
      for (const auto& r : rows) {
        if (r.config.depth == depth && r.config.conv_type == conv) group.push_back(&r);
      }
      std::sort(group.begin(), group.end(), [](auto* a, auto* b) {
        return a->config.scale_denominator < b->config.scale_denominator;
      });
      pass &= group.size() == 5;
      for (size_t i = 1; i < group.size(); ++i) {
        pass &= group[i]->macs < group[i - 1]->macs && group[i]->params < group[i - 1]->params;
      }
      ++groups;
    }
  }
  return {pass, std::to_string(groups) + " groups strictly decreasing in MACs and params"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MicroSeg acceptance checks"};
  std::vector<std::string> only, skip;
  std::string models_dir = MICROSEG_MODELS_DIR;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--skip", skip, "Skip these criteria")->delimiter(',');
  app.add_option("--models", models_dir, "Directory holding the demo models");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"param_counts", ParamCounts},
      {"gradients", Gradients},
      {"loss_identities", LossIdentities},
      {"metric_oracles", MetricOracles},
      {"quantization_fidelity", [&] { return QuantizationFidelity(models_dir); }},
      {"desk_training", DeskTraining},
      {"resource_sanity", ResourceSanity},
      {"determinism", Determinism},
      {"sweep_ordering", SweepOrdering},
  };
  std::set<std::string> known;
  for (const auto& c : criteria) known.insert(c.first);
  for (const auto& n : only) {
    if (!known.count(n)) {
      std::fprintf(stderr, "unknown criterion: %s\n", n.c_str());
      return 2;
    }
  }
  const std::set<std::string> only_set(only.begin(), only.end()), skip_set(skip.begin(), skip.end());
  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only_set.empty() && !only_set.count(name)) continue;
    if (skip_set.count(name)) {
      std::printf("SKIP %s\n", name.c_str());
      continue;
    }
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
