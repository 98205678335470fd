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


#include "attnagg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "attnagg/layers.hpp"
#include "attnagg/losses.hpp"
#include "attnagg/model.hpp"
#include "attnagg/ops.hpp"
#include "attnagg/rng.hpp"

namespace attnagg {

namespace {

Tensor Random(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = rng.Normal();
  return Tensor::From(std::move(shape), std::move(v), requires_grad);
}

// Entries bounded away from zero, for log, division and powers.
Tensor RandomPositive(Shape shape, Rng& rng) {
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = 0.5 + std::abs(rng.Normal());
  return Tensor::From(std::move(shape), std::move(v), true);
}

Tensor RandomLabels(Shape shape, Rng& rng) {
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = rng.Uniform() < 0.5 ? 1.0 : 0.0;
  return Tensor::From(std::move(shape), std::move(v));
}

PredictionHistory RandomHistory(std::span<const std::uint64_t> ids, std::size_t c, Rng& rng) {
  PredictionHistory h(5, c);
  for (std::size_t e = 0; e < 4; ++e) {
    std::vector<double> probs(ids.size() * c);
    for (auto& p : probs) p = rng.Uniform();
    h.RecordEpoch(e, ids, probs);
  }
  return h;
}

}  // namespace

std::vector<double> NumericGradient(const std::function<Tensor()>& f, Tensor& x, double eps) {
  NoGradGuard no_grad;
  std::vector<double> grad(x.numel());
  auto values = x.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f().item();
    values[i] = saved - eps;
    const double down = f().item();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double MaxRelativeError(std::span<const double> analytic, std::span<const double> numeric,
                        double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

double CheckGradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps) {
  ResetGraph();
  for (auto& t : inputs) t.ZeroGrad();
  Backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    t.ZeroGrad();
  }
  ResetGraph();
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    worst = std::max(worst, MaxRelativeError(analytic[i], NumericGradient(f, inputs[i], eps)));
  }
  return worst;
}

std::vector<GradcheckResult> OpGradcheck(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradcheckResult> results;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                   std::vector<Tensor> inputs) {
    results.push_back({name, CheckGradients(f, std::move(inputs)), kOpTolerance});
  };

  {
    auto a = Random({2, 3}, rng), b = Random({3}, rng), p = Random({2, 3}, rng, false);
    check("add", [=] { return Sum(Mul(Add(a, b), p)); }, {a, b});
    check("sub", [=] { return Sum(Mul(Sub(a, b), p)); }, {a, b});
    check("mul", [=] { return Sum(Mul(Mul(a, b), p)); }, {a, b});
    auto d = RandomPositive({3}, rng);
    check("div", [=] { return Sum(Mul(Div(a, d), p)); }, {a, d});
    check("exp", [=] { return Sum(Mul(Exp(a), p)); }, {a});
    auto pos = RandomPositive({2, 3}, rng);
    check("log", [=] { return Sum(Mul(Log(pos), p)); }, {pos});
    check("neg", [=] { return Sum(Mul(Neg(a), p)); }, {a});
    check("relu", [=] { return Sum(Mul(Relu(a), p)); }, {a});
    check("sigmoid", [=] { return Sum(Mul(Sigmoid(a), p)); }, {a});
    check("log_sigmoid", [=] { return Sum(Mul(LogSigmoid(a), p)); }, {a});
    check("pow_scalar", [=] { return Sum(Mul(PowScalar(pos, 1.7), p)); }, {pos});
  }
  {
    auto a = Random({2, 3, 4}, rng);
    auto p2 = Random({2, 4}, rng, false);
    check("sum", [=] { return Sum(Mul(Sum(a, {1}), p2)); }, {a});
    check("mean", [=] { return Sum(Mul(Mean(a, {1}), p2)); }, {a});
    check("max", [=] { return Sum(Mul(Max(a, {1}), p2)); }, {a});
    auto m = Random({3, 4}, rng), n = Random({4, 2}, rng);
    auto pm = Random({3, 2}, rng, false);
    check("matmul", [=] { return Sum(Mul(MatMul(m, n), pm)); }, {m, n});
    auto pt = Random({4, 3}, rng, false);
    check("transpose", [=] { return Sum(Mul(Transpose(m), pt)); }, {m});
    auto pr = Random({6, 2}, rng, false);
    check("reshape", [=] { return Sum(Mul(Reshape(m, {6, 2}), pr)); }, {m});
  }
  {
    auto x = Random({2, 2, 5, 5}, rng), w = Random({3, 2, 3, 3}, rng), b = Random({3}, rng);
    auto p = Random({2, 3, 3, 3}, rng, false);
    check("conv2d", [=] { return Sum(Mul(Conv2dForward(x, w, b, 2, 1), p)); }, {x, w, b});
    auto bx = Random({3, 2, 2, 2}, rng), g = Random({2}, rng), be = Random({2}, rng);
    auto pb = Random({3, 2, 2, 2}, rng, false);
    check("batchnorm_train", [=] {
      std::vector<double> rm(2, 0.0), rv(2, 1.0);
      return Sum(Mul(BatchNormForward(bx, g, be, rm, rv, 0.9, 1e-5, BatchNormMode::kTrain), pb));
    }, {bx, g, be});
    check("batchnorm_eval", [=] {
      std::vector<double> rm = {0.3, -0.2}, rv = {1.5, 0.7};
      return Sum(Mul(BatchNormForward(bx, g, be, rm, rv, 0.9, 1e-5, BatchNormMode::kEval), pb));
    }, {bx, g, be});
    auto z = Random({2, 2, 3, 3}, rng);
    auto pz = Random({2, 2, 3, 3}, rng, false);
    check("spatial_softmax", [=] { return Sum(Mul(SpatialSoftmax(z), pz)); }, {z});
    auto collapse = Conv2d::Create(2, 3, 3);
    InitParams(collapse, rng);
    auto cx = Random({2, 2, 3, 3}, rng);
    auto pc = Random({2, 3, 1, 1}, rng, false);
    check("global_collapse_conv", [=] { return Sum(Mul(GlobalCollapseConv(cx, collapse), pc)); },
          {cx, collapse.weight, collapse.bias});
    auto linear = Linear::Create(4, 3);
    InitParams(linear, rng);
    auto lx = Random({2, 4}, rng);
    auto pl = Random({2, 3}, rng, false);
    check("linear", [=] { return Sum(Mul(linear.Forward(lx), pl)); },
          {lx, linear.weight, linear.bias});
  }
  {
    const std::size_t n = 4, c = 3;
    auto logits = Random({n, c}, rng);
    logits = Tensor::From({n, c}, [&] {
      std::vector<double> v(logits.values().begin(), logits.values().end());
      for (auto& x : v) x *= 3.0;
      return v;
    }(), true);
    auto labels = RandomLabels({n, c}, rng);
    check("bce", [=] { return Bce(logits, labels); }, {logits});
    const std::vector<double> priors = {0.5, 0.1, 0.03};
    const auto weights = MakeClassWeights(priors);
    check("weighted_focal", [=] { return WeightedFocal(logits, labels, weights, {0.5}); },
          {logits});
    const std::vector<std::uint64_t> ids = {3, 8, 11, 20};
    const auto history = RandomHistory(ids, c, rng);
    AttentionLossConfig cfg;
    check("attention_loss", [=] {
      return AttentionLoss(logits, labels, ids, history, 6, cfg).loss;
    }, {logits});
    AttentionLossConfig per_attr = cfg;
    per_attr.granularity = StdGranularity::kPerAttribute;
    check("attention_loss_per_attribute", [=] {
      return AttentionLoss(logits, labels, ids, history, 6, per_attr).loss;
    }, {logits});
    auto y_a1 = Random({n, c}, rng), y_a2 = Random({n, c}, rng);
    LossConfig loss_cfg;
    loss_cfg.class_weights = weights;
    std::vector<PredictionHistory> histories = {history, RandomHistory(ids, c, rng)};
    check("total_loss", [=] {
      ModelOutput out;
      out.y_p = logits;
      out.levels.resize(2);
      out.levels[0].scale = 1;
      out.levels[0].logits = y_a1;
      out.levels[1].scale = 2;
      out.levels[1].logits = y_a2;
      return TotalLoss(out, labels, ids, histories, 6, loss_cfg).total;
    }, {logits, y_a1, y_a2});
  }
  return results;
}

std::vector<GradcheckResult> ModelGradcheck(std::uint64_t seed) {
  ModelConfig config;
  config.input_size = 16;
  config.num_attributes = 3;
  config.stage1 = {{4, 3, 2}, {4, 3, 2}};
  config.stage2 = {{4, 3, 2}};
  config.attention_channels = 4;
  config.classifier_widths = {4, 4};
  AttributeModel model(config, seed);
  Rng rng = Rng::Derive(seed, 0x6763);
  // Non-trivial masks: the zero-initialized trunk output would hide the
  // trunk's gradient path.
  for (auto& m : model.attention_modules()) {
    for (auto& v : m.trunk_out.weight.mutable_values()) v = 0.5 * rng.Normal();
  }
  for (auto& p : model.Parameters()) {
    if (p.name.find(".bn.") == std::string::npos) continue;
    for (auto& v : p.tensor.mutable_values()) v += 0.1 * rng.Normal();
  }
  auto images = Tensor::From({2, 3, 16, 16}, [&] {
    std::vector<double> v(2 * 3 * 16 * 16);
    for (auto& x : v) x = rng.Uniform();
    return v;
  }());
  auto labels = Tensor::From({2, 3}, {1, 0, 1, 0, 1, 1});
  const std::vector<std::uint64_t> ids = {0, 1};
  std::vector<PredictionHistory> histories;
  for (std::size_t i = 0; i < model.attention_scales().size(); ++i) {
    histories.push_back(RandomHistory(ids, 3, rng));
  }
  LossConfig loss_cfg;
  loss_cfg.class_weights = MakeClassWeights(std::vector<double>{0.5, 0.2, 0.05});
  auto f = [&] {
    auto out = model.Forward(images);
    return TotalLoss(out, labels, ids, histories, 6, loss_cfg).total;
  };

  std::vector<GradcheckResult> results;
  for (const char* group : {"primary", "attention"}) {
    std::vector<Tensor> params;
    for (auto& p : model.Parameters()) {
      if (p.group == group) params.push_back(p.tensor);
    }
    results.push_back({std::string("model.") + group, CheckGradients(f, params), kModelTolerance});
  }
  return results;
}

}  // namespace attnagg
