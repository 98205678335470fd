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


#include "attnagg/model.hpp"

#include "attnagg/error.hpp"
#include "attnagg/ops.hpp"

namespace attnagg {

namespace {

std::size_t StageExtent(const std::vector<ConvSpec>& stage, std::size_t size,
                        std::size_t& channels, const char* name) {
  if (stage.empty()) Fail(ErrorCode::kInvalidConfig, std::string(name) + " has no layers");
  for (const auto& spec : stage) {
    if (spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
      Fail(ErrorCode::kInvalidConfig, std::string(name) + " has a zero channel/kernel/stride");
    }
    if (size + 2 * (spec.kernel / 2) < spec.kernel) {
      Fail(ErrorCode::kInvalidConfig, std::string(name) + " kernel larger than its input");
    }
    size = ConvOutputExtent(size, spec.kernel, spec.stride, spec.kernel / 2);
    channels = spec.out_channels;
  }
  return size;
}

std::vector<ConvBnRelu> BuildStage(const std::vector<ConvSpec>& stage, std::size_t in) {
  std::vector<ConvBnRelu> layers;
  for (const auto& spec : stage) {
    layers.push_back(ConvBnRelu::Create(in, spec.out_channels, spec.kernel, spec.stride));
    in = spec.out_channels;
  }
  return layers;
}

void CollectStage(const std::string& prefix, const std::vector<ConvBnRelu>& layers,
                  std::vector<NamedTensor>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].CollectParams(prefix + "." + std::to_string(i), out);
  }
}

void CollectStageBuffers(const std::string& prefix, std::vector<ConvBnRelu>& layers,
                         std::vector<NamedBuffer>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].CollectBuffers(prefix + "." + std::to_string(i), out);
  }
}

void CollectModule(const std::string& prefix, const AttentionModule& m,
                   std::vector<NamedTensor>& out) {
  CollectStage(prefix + ".trunk", m.trunk, out);
  m.trunk_out.CollectParams(prefix + ".trunk_out", out);
  m.confidence.CollectParams(prefix + ".confidence", out);
  CollectStage(prefix + ".subnet", m.subnet, out);
  m.collapse.CollectParams(prefix + ".collapse", out);
}

Tensor RunStage(std::vector<ConvBnRelu>& layers, Tensor x) {
  for (auto& layer : layers) x = layer.Forward(x);
  return x;
}

}  // namespace

ModelGeometry ResolveGeometry(const ModelConfig& config) {
  if (config.input_channels == 0 || config.num_attributes == 0 || config.input_size == 0) {
    Fail(ErrorCode::kInvalidConfig, "input size, channels and attribute count must be positive");
  }
  ModelGeometry g;
  g.stage1_size = StageExtent(config.stage1, config.input_size, g.stage1_channels, "stage1");
  g.stage2_size = StageExtent(config.stage2, g.stage1_size, g.stage2_channels, "stage2");
  if (g.stage2_size >= g.stage1_size) {
    Fail(ErrorCode::kInvalidConfig, "stage2 output must be smaller than stage1 output");
  }
  if (g.stage2_size < 2) {
    Fail(ErrorCode::kInvalidConfig, "feature planes must be at least 2x2");
  }
  if (config.use_attention) {
    if (config.attention_channels == 0 || config.classifier_widths.empty()) {
      Fail(ErrorCode::kInvalidConfig, "attention branch needs channels and classifier widths");
    }
    for (auto w : config.classifier_widths) {
      if (w == 0) Fail(ErrorCode::kInvalidConfig, "classifier width 0");
    }
    if (!config.use_multiscale && config.single_scale != 1 && config.single_scale != 2) {
      Fail(ErrorCode::kInvalidConfig, "single_scale must be 1 or 2");
    }
  } else if (config.use_multiscale) {
    Fail(ErrorCode::kInvalidConfig, "use_multiscale requires use_attention");
  }
  return g;
}

AttentionModule AttentionModule::Create(std::size_t in_channels, std::size_t spatial,
                                        std::size_t attention_channels,
                                        std::size_t num_attributes,
                                        const std::vector<std::size_t>& classifier_widths) {
  AttentionModule m;
  m.trunk.push_back(ConvBnRelu::Create(in_channels, attention_channels, 1));
  m.trunk.push_back(ConvBnRelu::Create(attention_channels, attention_channels, 1));
  m.trunk_out = Conv2d::Create(attention_channels, num_attributes, 1);
  m.confidence = Conv2d::Create(in_channels, num_attributes, 1);
  std::size_t in = num_attributes;
  for (auto w : classifier_widths) {
    m.subnet.push_back(ConvBnRelu::Create(in, w, 1));
    in = w;
  }
  m.collapse = Conv2d::Create(in, num_attributes, spatial);
  return m;
}

Attended Attend(AttentionModule& module, const Tensor& features) {
  if (features.rank() != 4 || features.dim(1) != module.confidence.in_channels()) {
    Fail(ErrorCode::kShapeMismatch,
         "attention module expects " + std::to_string(module.confidence.in_channels()) +
             " channels, got " + ShapeToString(features.shape()));
  }
  Attended out;
  out.scores = module.trunk_out.Forward(RunStage(module.trunk, features));
  out.mask = SpatialSoftmax(out.scores);
  out.confidence = Sigmoid(module.confidence.Forward(features));
  out.weighted = Mul(out.mask, out.confidence);
  return out;
}

Tensor ClassifyAttention(AttentionModule& module, const Tensor& weighted) {
  if (weighted.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch, "attention classifier needs a rank-4 input");
  }
  auto y = GlobalCollapseConv(RunStage(module.subnet, weighted), module.collapse);
  return Reshape(y, {y.dim(0), y.dim(1)});
}

Tensor AggregateLogits(const std::vector<Tensor>& logits) {
  if (logits.empty()) Fail(ErrorCode::kShapeMismatch, "no logits to aggregate");
  Tensor total = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i].shape() != logits[0].shape()) {
      Fail(ErrorCode::kShapeMismatch, "aggregated logits differ in shape");
    }
    total = Add(total, logits[i]);
  }
  return logits.size() == 1 ? total : Div(total, static_cast<double>(logits.size()));
}

const LevelOutput* ModelOutput::level(std::size_t scale) const {
  for (const auto& l : levels) {
    if (l.scale == scale) return &l;
  }
  return nullptr;
}

AttributeModel::AttributeModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), geometry_(ResolveGeometry(config)) {
  stage1_ = BuildStage(config.stage1, config.input_channels);
  stage2_ = BuildStage(config.stage2, geometry_.stage1_channels);
  primary_ = Linear::Create(geometry_.stage2_channels, config.num_attributes);
  if (config.use_attention) {
    if (config.use_multiscale) {
      scales_ = {1, 2};
    } else {
      scales_ = {config.single_scale};
    }
  }
  for (auto scale : scales_) {
    const auto channels = scale == 1 ? geometry_.stage1_channels : geometry_.stage2_channels;
    const auto spatial = scale == 1 ? geometry_.stage1_size : geometry_.stage2_size;
    modules_.push_back(AttentionModule::Create(channels, spatial, config.attention_channels,
                                               config.num_attributes,
                                               config.classifier_widths));
  }

  Rng rng(Rng::Derive(seed, 0x6d6f64656cULL));
  for (auto& layer : stage1_) InitParams(layer, rng);
  for (auto& layer : stage2_) InitParams(layer, rng);
  InitParams(primary_, rng);
  for (auto& m : modules_) {
    for (auto& layer : m.trunk) InitParams(layer, rng);
    InitParams(m.confidence, rng);
    for (auto& layer : m.subnet) InitParams(layer, rng);
    InitParams(m.collapse, rng);
  }
}

std::pair<Tensor, Tensor> AttributeModel::ForwardBackbone(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != config_.input_channels || x.dim(2) != config_.input_size ||
      x.dim(3) != config_.input_size) {
    Fail(ErrorCode::kShapeMismatch,
         "model expects [N x " + std::to_string(config_.input_channels) + " x " +
             std::to_string(config_.input_size) + " x " + std::to_string(config_.input_size) +
             "], got " + ShapeToString(x.shape()));
  }
  Tensor k1 = RunStage(stage1_, x);
  Tensor k2 = RunStage(stage2_, k1);
  return {k1, k2};
}

ModelOutput AttributeModel::Forward(const Tensor& x) {
  ModelOutput out;
  std::tie(out.k1, out.k2) = ForwardBackbone(x);
  out.y_p = primary_.Forward(Mean(out.k2, {2, 3}));
  std::vector<Tensor> logits = {out.y_p};
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    LevelOutput level;
    level.scale = scales_[i];
    level.attended = Attend(modules_[i], scales_[i] == 1 ? out.k1 : out.k2);
    level.logits = ClassifyAttention(modules_[i], level.attended.weighted);
    logits.push_back(level.logits);
    out.levels.push_back(std::move(level));
  }
  out.y_final = AggregateLogits(logits);
  return out;
}

std::vector<BatchNorm*> AttributeModel::AllBatchNorms() {
  std::vector<BatchNorm*> out;
  for (auto& l : stage1_) out.push_back(&l.bn);
  for (auto& l : stage2_) out.push_back(&l.bn);
  for (auto& m : modules_) {
    for (auto& l : m.trunk) out.push_back(&l.bn);
    for (auto& l : m.subnet) out.push_back(&l.bn);
  }
  return out;
}

void AttributeModel::SetTraining(bool training) {
  for (auto* bn : AllBatchNorms()) {
    bn->mode = training ? BatchNormMode::kTrain : BatchNormMode::kEval;
  }
}

void AttributeModel::SetFrozen(const std::string& group, bool frozen) {
  if (group != "primary" && group != "attention") {
    Fail(ErrorCode::kUnknownGroup, "unknown parameter group '" + group + "'");
  }
  (group == "primary" ? primary_frozen_ : attention_frozen_) = frozen;
  for (auto& p : Parameters()) {
    if (p.group == group) p.tensor.set_requires_grad(!frozen);
  }
}

bool AttributeModel::IsFrozen(const std::string& group) const {
  if (group == "primary") return primary_frozen_;
  if (group == "attention") return attention_frozen_;
  Fail(ErrorCode::kUnknownGroup, "unknown parameter group '" + group + "'");
}

std::vector<ParamEntry> AttributeModel::Parameters() const {
  std::vector<NamedTensor> primary;
  CollectStage("stage1", stage1_, primary);
  CollectStage("stage2", stage2_, primary);
  primary_.CollectParams("primary", primary);
  std::vector<NamedTensor> attention;
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    CollectModule("attention" + std::to_string(scales_[i]), modules_[i], attention);
  }
  std::vector<ParamEntry> out;
  for (auto& p : primary) out.push_back({p.name, "primary", p.tensor});
  for (auto& p : attention) out.push_back({p.name, "attention", p.tensor});
  return out;
}

std::vector<NamedBuffer> AttributeModel::Buffers() {
  std::vector<NamedBuffer> out;
  CollectStageBuffers("stage1", stage1_, out);
  CollectStageBuffers("stage2", stage2_, out);
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    const auto prefix = "attention" + std::to_string(scales_[i]);
    CollectStageBuffers(prefix + ".trunk", modules_[i].trunk, out);
    CollectStageBuffers(prefix + ".subnet", modules_[i].subnet, out);
  }
  return out;
}

}  // namespace attnagg
