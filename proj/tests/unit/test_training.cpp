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

#include <cmath>

#include "dataio/dataset.hpp"
#include "doctest.h"
#include "tensorops/model.hpp"
#include "test_util.hpp"
#include "training/adam.hpp"
#include "training/loss.hpp"
#include "training/trainer.hpp"

using namespace microseg;
using namespace microseg::training;
using tensorops::Tensor;

namespace {

TverskyParams NoEps() {
  TverskyParams tp;
  tp.epsilon = 0.0;
  return tp;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("focal tversky identities") {
    const TverskyParams d;
    CHECK(FocalTverskyFromCounts({5, 0, 0}, d) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(FocalTverskyFromCounts({0, 3, 4}, NoEps()) == doctest::Approx(1.0));
    CHECK(std::fabs(FocalTverskyFromCounts({1, 1, 1}, NoEps()) - std::pow(0.5, 4.0 / 3.0)) < 1e-9);
    // TP / (TP + 0.7 FN) = 1/2
    CHECK(std::fabs(FocalTverskyFromCounts({1.0, 0.0, 1.0 / 0.7}, NoEps()) -
                    std::pow(0.5, 4.0 / 3.0)) < 1e-9);
    const double tp = 1.0, fp = 2.0, fn = 3.0, eps = 1e-6;
    const double ti = (tp + eps) / (tp + 0.3 * fp + 0.7 * fn + eps);
    CHECK(std::fabs(FocalTverskyFromCounts({tp, fp, fn}, d) - std::pow(1 - ti, 4.0 / 3.0)) < 1e-12);
    CHECK(FocalTverskyFromCounts({0, 0, 0}, NoEps()) == 0.0);
  }

  TEST_CASE("symmetric weights and unit exponent reduce to dice loss") {
    TverskyParams dice = NoEps();
    dice.alpha = dice.beta = 0.5;
    dice.gamma = 1.0;
    for (auto c : {SoftCounts{3, 1, 2}, SoftCounts{0.5, 4, 0.1}, SoftCounts{10, 0, 7}}) {
      CHECK(FocalTverskyFromCounts(c, dice) ==
            doctest::Approx(1 - 2 * c.tp / (2 * c.tp + c.fp + c.fn)).epsilon(1e-12));
    }
  }

  TEST_CASE("loss grows with false negatives and false positives") {
    const TverskyParams d;
    double prev = -1;
    for (double fn = 0; fn <= 10; fn += 1) {
      const double l = FocalTverskyFromCounts({5, 1, fn}, d);
      CHECK(l > prev);
      prev = l;
    }
    // False negatives weigh more than false positives.
    CHECK(FocalTverskyFromCounts({5, 0, 3}, d) > FocalTverskyFromCounts({5, 3, 0}, d));
  }

  TEST_CASE("invalid tversky parameters are rejected") {
    TverskyParams bad;
    bad.gamma = 0;
    CHECK_THROWS_AS(Validate(bad), Error);
    bad = {};
    bad.epsilon = -1;
    CHECK_THROWS_AS(Validate(bad), Error);
  }

  TEST_CASE("batched loss averages per-sample losses") {
    const auto probs = testing::RandomTensor<double>({3, 6, 6, 1}, 1, 0.01, 0.99);
    const auto mask = testing::RandomMask<double>({3, 6, 6, 1}, 2);
    const TverskyParams d;
    double mean = 0;
    for (int n = 0; n < 3; ++n) {
      SoftCounts c;
      for (int i = 0; i < 36; ++i) {
        const double p = probs[n * 36 + i], g = mask[n * 36 + i];
        c.tp += p * g;
        c.fp += p * (1 - g);
        c.fn += (1 - p) * g;
      }
      mean += FocalTverskyFromCounts(c, d) / 3;
    }
    CHECK(FocalTverskyLoss(probs, mask, d).loss == doctest::Approx(mean).epsilon(1e-12));
  }

  TEST_CASE("loss ignores pixel order") {
    auto probs = testing::RandomTensor<double>({1, 8, 8, 1}, 3, 0.01, 0.99);
    auto mask = testing::RandomMask<double>({1, 8, 8, 1}, 4);
    const double base = FocalTverskyLoss(probs, mask, {}).loss;
    CounterRng rng(9);
    for (int i = 63; i > 0; --i) {
      const int j = static_cast<int>(rng.Below(i + 1));
      std::swap(probs[i], probs[j]);
      std::swap(mask[i], mask[j]);
    }
    CHECK(FocalTverskyLoss(probs, mask, {}).loss == doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("loss gradient matches central differences") {
    auto probs = testing::RandomTensor<double>({2, 5, 5, 1}, 5, 0.05, 0.95);
    const auto mask = testing::RandomMask<double>({2, 5, 5, 1}, 6);
    const auto res = FocalTverskyLoss(probs, mask, {});
    auto f = [&] { return FocalTverskyLoss(probs, mask, {}).loss; };
    for (int64_t i = 0; i < probs.size(); ++i) {
      CHECK(testing::RelError(testing::CentralDifference(f, &probs[i]), res.grad[i], 1e-6) < 1e-6);
    }
  }

  TEST_CASE("non-binary masks are rejected") {
    Tensor<float> probs({1, 2, 2, 1}, 0.5f);
    Tensor<float> mask({1, 2, 2, 1}, 0.5f);
    CHECK_THROWS_AS(FocalTverskyLoss(probs, mask, {}), Error);
  }

  TEST_CASE("adam update rule") {
    const auto g = testing::OneLayer(archgen::LayerKind::kConv3x3, {3, 3, 2}, 2);
    auto params = tensorops::ZeroParams<double>(g);
    for (auto& v : params[0].weights.vec()) v = 0.25;
    const auto start = params;
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;

    SUBCASE("zero gradients leave parameters alone") {
      AdamState st;
      const auto zero = tensorops::ZeroParams<double>(g);
      AdamStep(params, zero, st, cfg);
      CHECK(params[0].weights == start[0].weights);
    }
    SUBCASE("first step moves each parameter by about the learning rate") {
      AdamState st;
      auto grads = tensorops::ZeroParams<double>(g);
      CounterRng rng(1);
      for (auto& v : grads[0].weights.vec()) v = rng.Uniform(0.1, 2.0) * (rng.NextDouble() < 0.5 ? -1 : 1);
      AdamStep(params, grads, st, cfg);
      for (int64_t i = 0; i < params[0].weights.size(); ++i) {
        const double delta = params[0].weights[i] - start[0].weights[i];
        CHECK(std::fabs(std::fabs(delta) - 1e-3) < 1e-8);
        CHECK((delta < 0) == (grads[0].weights[i] > 0));
      }
    }
    SUBCASE("ten steps match a scalar reference") {
      AdamState st;
      std::vector<double> p(params[0].weights.vec()), m(p.size()), v(p.size());
      for (int t = 1; t <= 10; ++t) {
        auto grads = tensorops::ZeroParams<double>(g);
        CounterRng rng(100 + t);
        for (auto& x : grads[0].weights.vec()) x = rng.Uniform(-1, 1);
        for (size_t i = 0; i < p.size(); ++i) {
          const double gi = grads[0].weights[static_cast<int64_t>(i)];
          m[i] = 0.9 * m[i] + 0.1 * gi;
          v[i] = 0.999 * v[i] + 0.001 * gi * gi;
          const double mh = m[i] / (1 - std::pow(0.9, t));
          const double vh = v[i] / (1 - std::pow(0.999, t));
          p[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-7);
        }
        AdamStep(params, grads, st, cfg);
      }
      CHECK(st.step == 10);
      for (size_t i = 0; i < p.size(); ++i) {
        CHECK(std::fabs(params[0].weights[static_cast<int64_t>(i)] - p[i]) < 1e-12);
      }
    }
    SUBCASE("zero learning rate leaves parameters alone") {
      AdamState st;
      cfg.learning_rate = 0;
      auto grads = tensorops::ZeroParams<double>(g);
      for (auto& x : grads[0].weights.vec()) x = 1.0;
      AdamStep(params, grads, st, cfg);
      CHECK(params[0].weights == start[0].weights);
    }
  }

  TEST_CASE("training runs") {
    const auto samples = dataio::SynthCracks(12, 3, {16, 16});
    const auto graph = testing::TwoBlockUnet(16, 16, 4, true);
    const auto train = dataio::Select(samples, {0, 1, 2, 3, 4, 5, 6, 7});
    const auto val = dataio::Select(samples, {8, 9, 10, 11});
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-2;
    cfg.seed = 5;

    SUBCASE("identically seeded runs are bit-identical") {
      const auto a = Train(graph, train, val, cfg, {});
      const auto b = Train(graph, train, val, cfg, {});
      CHECK(HistoryCsv(a.history) == HistoryCsv(b.history));
      for (size_t i = 0; i < a.best_params.size(); ++i) {
        CHECK(a.best_params[i].weights == b.best_params[i].weights);
        CHECK(a.final_params[i].moving_var == b.final_params[i].moving_var);
      }
      REQUIRE(a.history.size() == 3);
      CHECK(a.best_epoch >= 1);
      CHECK(a.history.back().train_loss < a.history.front().train_loss);
      CHECK(&a.history[a.best_epoch - 1] ==
            &*std::max_element(a.history.begin(), a.history.end(),
                               [](auto& x, auto& y) { return x.val_f1 < y.val_f1; }));
    }
    SUBCASE("zero learning rate keeps the weights") {
      cfg.learning_rate = 0;
      cfg.epochs = 1;
      const auto init = tensorops::InitParams(graph, 1);
      const auto r = Train(graph, init, train, val, cfg, {});
      for (size_t i = 0; i < init.size(); ++i) {
        CHECK(r.final_params[i].weights == init[i].weights);
        CHECK(r.final_params[i].bias == init[i].bias);
      }
    }
    SUBCASE("epoch callback sees every epoch") {
      std::vector<int> seen;
      Train(graph, train, val, cfg, {}, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
      CHECK(seen == std::vector<int>{1, 2, 3});
    }
    SUBCASE("empty training split") {
      CHECK_THROWS_AS(Train(graph, {}, val, cfg, {}), Error);
    }
    SUBCASE("empty validation split reports NA") {
      cfg.epochs = 1;
      const auto r = Train(graph, train, {}, cfg, {});
      CHECK(std::isnan(r.history[0].val_loss));
      CHECK(HistoryCsv(r.history).find("NA") != std::string::npos);
    }
    SUBCASE("invalid configuration") {
      cfg.batch_size = 0;
      CHECK_THROWS_AS(Validate(cfg), Error);
    }
  }

  TEST_CASE("he-uniform initialisation bounds") {
    const auto g = archgen::BuildGraph(archgen::ParseConfigId("d3_x1-16_dw"));
    const auto p = tensorops::InitParams(g, 0);
    for (size_t i = 0; i < g.layers.size(); ++i) {
      const auto& l = g.layers[i];
      if (!archgen::HasWeights(l.kind)) continue;
      const auto& s = p[i].weights.shape();
      const double limit = std::sqrt(6.0 / (s.n * s.h * s.w));
      for (auto v : p[i].weights.vec()) REQUIRE(std::fabs(v) <= limit);
      for (auto v : p[i].bias) REQUIRE(v == 0.0f);
    }
    CHECK(tensorops::InitParams(g, 0)[0].weights == p[0].weights);
    CHECK(!(tensorops::InitParams(g, 1)[0].weights == p[0].weights));
  }
}
