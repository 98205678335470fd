/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "attnagg/losses.hpp"
#include "attnagg/ops.hpp"
#include "test_util.hpp"

namespace attnagg {
namespace {

using testing::CaptureError;
using testing::GradcheckMaxError;
using testing::RandomTensor;

Tensor Labels(Shape shape, Rng& rng) {
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = rng.Uniform() < 0.4 ? 1.0 : 0.0;
  return Tensor::From(std::move(shape), std::move(v));
}

Tensor Col(double logit, bool grad = false) { return Tensor::From({1, 1}, {logit}, grad); }

// Direct evaluation with long double and a two-pass mean.
double OracleStd(const std::vector<double>& h) {
  if (h.size() < 2) return 0.0;
  long double mean = 0.0L;
  for (double v : h) mean += v;
  mean /= h.size();
  long double var = 0.0L;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= h.size();
  return static_cast<double>(std::sqrt(var + var * var / (h.size() - 1)));
}

TEST(BceTest, Examples) {
  EXPECT_NEAR(Bce(Col(0.0), Col(1.0)).item(), 0.6931471805599453, 1e-15);
  const double tiny = Bce(Col(50.0), Col(1.0)).item();
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_LT(tiny, 1e-20);
  for (double l : {-7.3, -0.2, 0.0, 1.5, 30.0}) {
    EXPECT_EQ(Bce(Col(l), Col(1.0)).item(), Bce(Col(-l), Col(0.0)).item());
  }
}

TEST(BceTest, SumsAttributesAndAveragesBatch) {
  auto logits = Tensor::From({2, 2}, {0.0, 1.0, -2.0, 0.5});
  auto labels = Tensor::From({2, 2}, {1, 0, 0, 1});
  auto sp = [](double x) { return std::log1p(std::exp(x)); };
  const double expected = (sp(0.0) + sp(1.0) + sp(-2.0) + sp(-0.5)) / 2.0;
  EXPECT_NEAR(Bce(logits, labels).item(), expected, 1e-14);
}

TEST(BceTest, Errors) {
  EXPECT_EQ(CaptureError([] { Bce(Tensor::Zeros({2, 3}), Tensor::Zeros({3, 2})); }),
            ErrorCode::kShapeMismatch);
  EXPECT_EQ(CaptureError([] { Bce(Tensor::Zeros({1, 2}), Tensor::From({1, 2}, {1.0, 0.5})); }),
            ErrorCode::kNonBinaryLabel);
}

TEST(ClassWeightsTest, Examples) {
  std::vector<double> priors = {1e-12, 0.999, 0.5};
  auto w = MakeClassWeights(priors);
  EXPECT_NEAR(w.weights[0], 1.0, 1e-11);
  EXPECT_NEAR(w.weights[1], 0.36824750461, 1e-10);
  EXPECT_NEAR(w.weights[2], 0.6065306597126334, 1e-15);
  for (double bad : {1.0, -0.1, 1.5}) {
    std::vector<double> p = {0.2, bad};
    EXPECT_EQ(CaptureError([&] { MakeClassWeights(p); }), ErrorCode::kPriorOutOfRange);
  }
  std::vector<double> desk = {0.5, 0.3, 0.25, 0.1, 0.06, 0.035};
  for (double v : MakeClassWeights(desk).weights) {
    EXPECT_GT(v, std::exp(-1.0));
    EXPECT_LT(v, 1.0);
  }
}

ClassWeights Unit(std::size_t c) {
  std::vector<double> zeros(c, 0.0);
  return MakeClassWeights(zeros);
}

TEST(FocalTest, ReducesToBce) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = RandomTensor({4, 5}, rng, 4.0, false);
    auto labels = Labels({4, 5}, rng);
    const double f = WeightedFocal(logits, labels, Unit(5), FocalConfig{0.0}).item();
    EXPECT_NEAR(f, Bce(logits, labels).item(), 1e-12);
  }
}

TEST(FocalTest, Examples) {
  EXPECT_NEAR(WeightedFocal(Col(0.0), Col(1.0), Unit(1), FocalConfig{0.5}).item(),
              std::sqrt(0.5) * std::log(2.0), 1e-15);
  const double easy = WeightedFocal(Col(10.0), Col(1.0), Unit(1), FocalConfig{0.5}).item();
  EXPECT_LT(easy, 1e-4 * std::log(2.0));
  // Prior weight multiplies the per-attribute term.
  std::vector<double> p = {0.3};
  const double weighted = WeightedFocal(Col(0.7), Col(0.0), MakeClassWeights(p), {0.5}).item();
  const double unit = WeightedFocal(Col(0.7), Col(0.0), Unit(1), {0.5}).item();
  EXPECT_NEAR(weighted, std::exp(-0.3) * unit, 1e-15);
}

TEST(FocalTest, MonotoneInLogitForPositives) {
  std::vector<double> p = {0.1};
  auto w = MakeClassWeights(p);
  double previous = INFINITY;
  for (double l = -30.0; l <= 30.0; l += 0.25) {
    const double v = WeightedFocal(Col(l), Col(1.0), w, {0.5}).item();
    EXPECT_LT(v, previous) << l;
    previous = v;
  }
}

TEST(FocalTest, FiniteAtExtremes) {
  std::vector<double> p = {0.5, 0.035};
  auto w = MakeClassWeights(p);
  for (double l = -100.0; l <= 100.0; l += 12.5) {
    for (double y : {0.0, 1.0}) {
      auto logits = Tensor::From({1, 2}, {l, -l}, true);
      auto labels = Tensor::From({1, 2}, {y, 1.0 - y});
      ResetGraph();
      auto loss = WeightedFocal(logits, labels, w, {0.5});
      Backward(loss);
      EXPECT_TRUE(std::isfinite(loss.item()));
      for (double g : logits.grad()) EXPECT_TRUE(std::isfinite(g));
      EXPECT_TRUE(std::isfinite(Bce(logits, labels).item()));
    }
  }
  ResetGraph();
}

TEST(FocalTest, Gradients) {
  Rng rng(22);
  auto logits = RandomTensor({3, 4}, rng, 2.0);
  auto labels = Labels({3, 4}, rng);
  std::vector<double> p = {0.5, 0.2, 0.1, 0.05};
  auto w = MakeClassWeights(p);
  EXPECT_LT(GradcheckMaxError([&] { return WeightedFocal(logits, labels, w, {0.5}); }, {logits}),
            1e-6);
  EXPECT_LT(GradcheckMaxError([&] { return WeightedFocal(logits, labels, w, {2.0}); }, {logits}),
            1e-6);
}

TEST(HistoryStdTest, Examples) {
  std::vector<double> constant = {0.7, 0.7, 0.7};
  EXPECT_EQ(HistoryStd(constant, VarianceKind::kPopulation), 0.0);
  std::vector<double> pair = {0.2, 0.4};
  EXPECT_NEAR(HistoryStd(pair, VarianceKind::kPopulation), std::sqrt(0.0101), 1e-12);
  EXPECT_NEAR(HistoryStd(pair, VarianceKind::kPopulation), 0.100499, 1e-6);
  std::vector<double> one = {0.9};
  EXPECT_EQ(HistoryStd(one, VarianceKind::kPopulation), 0.0);
  // Bessel: v = 0.02 for the same pair.
  EXPECT_NEAR(HistoryStd(pair, VarianceKind::kBessel), std::sqrt(0.02 + 0.0004), 1e-12);
}

TEST(HistoryOracleTest, RandomHistories) {
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t window = 1 + rng.Below(7);
    const std::size_t epochs = 1 + rng.Below(9);
    const std::size_t c = 1 + rng.Below(4);
    PredictionHistory h(window, c);
    std::vector<std::vector<double>> seen(c);
    const std::uint64_t id = 42;
    for (std::size_t e = 0; e < epochs; ++e) {
      std::vector<double> probs(c);
      for (auto& p : probs) p = rng.Uniform();
      // A few constant streams exercise the zero-variance path.
      if (trial % 50 == 0) probs.assign(c, 0.3);
      std::vector<std::uint64_t> ids = {id};
      h.RecordEpoch(e + 3, ids, probs);
      for (std::size_t a = 0; a < c; ++a) seen[a].push_back(probs[a]);
    }
    double mean = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
      std::vector<double> tail(seen[a].end() - std::min(window, seen[a].size()), seen[a].end());
      ASSERT_EQ(h.Values(id, a), tail);
      const double expected = OracleStd(tail);
      ASSERT_NEAR(h.AttributeStd(id)[a], expected, 1e-12);
      mean += expected;
    }
    ASSERT_NEAR(h.SampleStd(id), mean / c, 1e-12);
  }
}

TEST(PredictionHistoryTest, RingBuffer) {
  PredictionHistory h(5, 1);
  std::vector<std::uint64_t> ids = {1};
  std::vector<double> p = {0.5};
  h.RecordEpoch(1, ids, p);
  EXPECT_EQ(h.epochs().size(), 1u);
  for (std::size_t e = 2; e <= 7; ++e) h.RecordEpoch(e, ids, p);
  EXPECT_EQ(h.epochs(), (std::vector<std::size_t>{3, 4, 5, 6, 7}));
  EXPECT_EQ(h.Values(1, 0).size(), 5u);
  EXPECT_EQ(CaptureError([&] { h.RecordEpoch(3, ids, p); }), ErrorCode::kDuplicateEpoch);
  EXPECT_EQ(CaptureError([&] { h.RecordEpoch(7, ids, p); }), ErrorCode::kDuplicateEpoch);
  EXPECT_EQ(CaptureError([&] { h.SampleStd(99); }), ErrorCode::kUnknownSample);
}

TEST(PredictionHistoryTest, CsvRoundTrip) {
  PredictionHistory h(3, 2);
  Rng rng(24);
  for (std::size_t e = 0; e < 4; ++e) {
    std::vector<std::uint64_t> ids = {5, 9, 11};
    std::vector<double> p(6);
    for (auto& v : p) v = rng.Uniform();
    h.RecordEpoch(e, ids, p);
  }
  std::stringstream s;
  h.Write(s);
  PredictionHistory back(3, 2);
  back.Read(s);
  EXPECT_TRUE(back == h);
  EXPECT_EQ(back.SampleStd(9), h.SampleStd(9));
}

PredictionHistory HistoryWith(const std::vector<std::pair<std::uint64_t, std::vector<double>>>& rows,
                              std::size_t c) {
  // rows: id -> per-epoch probability applied to every attribute
  PredictionHistory h(5, c);
  const std::size_t epochs = rows.front().second.size();
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<std::uint64_t> ids;
    std::vector<double> probs;
    for (const auto& [id, series] : rows) {
      ids.push_back(id);
      for (std::size_t a = 0; a < c; ++a) probs.push_back(series[e]);
    }
    h.RecordEpoch(e, ids, probs);
  }
  return h;
}

TEST(AttentionLossTest, ZeroStdIsBce) {
  Rng rng(25);
  auto logits = RandomTensor({3, 2}, rng, 2.0, false);
  auto labels = Labels({3, 2}, rng);
  std::vector<std::uint64_t> ids = {1, 2, 3};
  auto h = HistoryWith({{1, {0.3, 0.3, 0.3}}, {2, {0.6, 0.6, 0.6}}, {3, {0.1, 0.1, 0.1}}}, 2);
  auto r = AttentionLoss(logits, labels, ids, h, 5, {});
  EXPECT_NEAR(r.loss.item(), Bce(logits, labels).item(), 1e-12);
  for (double s : r.per_sample_std) EXPECT_EQ(s, 0.0);
}

TEST(AttentionLossTest, ScalesBySampleStd) {
  // Std 0.5 from a two-point history: v + v^2 = 0.25 gives v = (sqrt(2) - 1) / 2.
  const double v = (std::sqrt(2.0) - 1.0) / 2.0;
  const double half = std::sqrt(v);
  auto h = HistoryWith({{7, {0.5 - half, 0.5 + half}}}, 1);
  ASSERT_NEAR(h.SampleStd(7), 0.5, 1e-12);
  std::vector<std::uint64_t> ids = {7};
  auto r = AttentionLoss(Col(0.4), Col(1.0), ids, h, 3, {});
  EXPECT_NEAR(r.loss.item(), 1.5 * Bce(Col(0.4), Col(1.0)).item(), 1e-12);
}

TEST(AttentionLossTest, WeightedBatchMean) {
  // Std 1 needs v + v^2 = 1: not reachable with probabilities, so use the
  // factor form directly for the {0, 1} example.
  auto logits = Tensor::From({2, 1}, {0.3, -0.3});
  auto labels = Tensor::From({2, 1}, {1.0, 0.0});
  const double b = Bce(Col(0.3), Col(1.0)).item();
  std::vector<double> factors = {1.0, 2.0};
  EXPECT_NEAR(FactorWeightedBce(logits, labels, factors).item(), 1.5 * b, 1e-12);
}

TEST(AttentionLossTest, BurnInAndWeights) {
  Rng rng(26);
  auto logits = RandomTensor({2, 2}, rng, 1.0, false);
  auto labels = Labels({2, 2}, rng);
  std::vector<std::uint64_t> ids = {1, 2};
  auto h = HistoryWith({{1, {0.1, 0.8, 0.3}}, {2, {0.5, 0.5, 0.5}}}, 2);
  AttentionLossConfig cfg;
  cfg.burn_in_epochs = 4;
  auto early = AttentionLoss(logits, labels, ids, h, 3, cfg);
  EXPECT_EQ(early.loss.item(), Bce(logits, labels).item());
  for (double s : early.per_sample_std) EXPECT_EQ(s, 0.0);
  auto late = AttentionLoss(logits, labels, ids, h, 4, cfg);
  EXPECT_GT(late.per_sample_std[0], 0.0);
  EXPECT_EQ(late.per_sample_std[1], 0.0);
  EXPECT_GT(late.loss.item(), Bce(logits, labels).item());
  cfg.variance_weighting = false;
  EXPECT_EQ(AttentionLoss(logits, labels, ids, h, 4, cfg).loss.item(), Bce(logits, labels).item());
  // Unknown ids count as zero dispersion.
  std::vector<std::uint64_t> fresh = {100, 101};
  cfg.variance_weighting = true;
  EXPECT_NEAR(AttentionLoss(logits, labels, fresh, h, 4, cfg).loss.item(),
              Bce(logits, labels).item(), 1e-12);
}

TEST(AttentionLossTest, PerAttributeGranularity) {
  Rng rng(27);
  auto logits = RandomTensor({1, 2}, rng, 1.0, false);
  auto labels = Tensor::From({1, 2}, {1.0, 0.0});
  PredictionHistory h(5, 2);
  std::vector<std::uint64_t> ids = {3};
  std::vector<double> e0 = {0.2, 0.5}, e1 = {0.4, 0.5};
  h.RecordEpoch(0, ids, e0);
  h.RecordEpoch(1, ids, e1);
  AttentionLossConfig cfg;
  cfg.granularity = StdGranularity::kPerAttribute;
  auto r = AttentionLoss(logits, labels, ids, h, 5, cfg);
  auto sp = [](double x) { return std::log1p(std::exp(x)); };
  const double expected = (1.0 + std::sqrt(0.0101)) * sp(-logits[0]) + sp(logits[1]);
  EXPECT_NEAR(r.loss.item(), expected, 1e-12);
}

TEST(AttentionLossTest, StdIsConstantInBackward) {
  Rng rng(28);
  auto logits = RandomTensor({2, 3}, rng, 1.0);
  auto labels = Labels({2, 3}, rng);
  std::vector<std::uint64_t> ids = {1, 2};
  auto h = HistoryWith({{1, {0.1, 0.8, 0.3}}, {2, {0.2, 0.3, 0.9}}}, 3);
  EXPECT_LT(GradcheckMaxError([&] { return AttentionLoss(logits, labels, ids, h, 5, {}).loss; },
                              {logits}),
            1e-6);
}

ModelOutput FakeOutput(Rng& rng, bool grad) {
  ModelOutput out;
  out.y_p = RandomTensor({3, 2}, rng, 1.5, grad);
  for (std::size_t s : {1, 2}) {
    LevelOutput l;
    l.scale = s;
    l.logits = RandomTensor({3, 2}, rng, 1.5, grad);
    out.levels.push_back(l);
  }
  return out;
}

TEST(TotalLossTest, SumAndReduction) {
  Rng rng(29);
  auto out = FakeOutput(rng, false);
  auto labels = Labels({3, 2}, rng);
  std::vector<std::uint64_t> ids = {1, 2, 3};
  auto h = HistoryWith({{1, {0.2, 0.2}}, {2, {0.5, 0.5}}, {3, {0.9, 0.9}}}, 2);
  std::vector<PredictionHistory> hs = {h, h};
  LossConfig cfg;
  cfg.focal.gamma = 0.0;
  cfg.class_weights = Unit(2);
  auto b = TotalLoss(out, labels, ids, hs, 6, cfg);
  EXPECT_EQ(b.total.item(), b.l_w.item() + b.l_a[0].item() + b.l_a[1].item());
  const double reduced = Bce(out.y_p, labels).item() + Bce(out.levels[0].logits, labels).item() +
                         Bce(out.levels[1].logits, labels).item();
  EXPECT_NEAR(b.total.item(), reduced, 1e-12);
  auto attention_only = TotalLoss(out, labels, ids, hs, 6, cfg, false);
  EXPECT_EQ(attention_only.total.item(), b.l_a[0].item() + b.l_a[1].item());
  EXPECT_EQ(CaptureError([&] { TotalLoss(out, labels, ids, {h}, 6, cfg); }),
            ErrorCode::kShapeMismatch);
}

TEST(TotalLossTest, PrimaryGradientComesFromFocalOnly) {
  Rng rng(30);
  auto out = FakeOutput(rng, true);
  auto labels = Labels({3, 2}, rng);
  std::vector<std::uint64_t> ids = {1, 2, 3};
  auto h = HistoryWith({{1, {0.2, 0.6}}, {2, {0.5, 0.1}}, {3, {0.9, 0.4}}}, 2);
  std::vector<PredictionHistory> hs = {h, h};
  LossConfig cfg;
  std::vector<double> p = {0.4, 0.1};
  cfg.class_weights = MakeClassWeights(p);
  ResetGraph();
  Backward(TotalLoss(out, labels, ids, hs, 6, cfg).total);
  std::vector<double> from_total(out.y_p.grad().begin(), out.y_p.grad().end());
  auto numeric = testing::NumericGradient(
      [&] { return WeightedFocal(out.y_p, labels, cfg.class_weights, cfg.focal).item(); }, out.y_p);
  EXPECT_LT(testing::MaxRelativeError(from_total, numeric), 1e-7);
  EXPECT_LT(GradcheckMaxError([&] { return TotalLoss(out, labels, ids, hs, 6, cfg).total; },
                              {out.y_p, out.levels[0].logits, out.levels[1].logits}),
            1e-6);
}

}  // namespace
}  // namespace attnagg
