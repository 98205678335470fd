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


// The attribute model: a two-stage convolutional backbone, a primary
// classifier on the deepest features, and one attention branch per feature
// scale whose logits are averaged with the primary logits.

#pragma once

#include <string>
#include <vector>

#include "attnagg/layers.hpp"
#include "attnagg/rng.hpp"
#include "attnagg/tensor.hpp"

namespace attnagg {

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

struct ModelConfig {
  std::size_t input_size = 32;
  std::size_t input_channels = 3;
  std::size_t num_attributes = 6;
  std::vector<ConvSpec> stage1 = {{16, 3, 2}, {32, 3, 2}};
  std::vector<ConvSpec> stage2 = {{64, 3, 2}, {64, 3, 1}};
  std::size_t attention_channels = 64;
  std::vector<std::size_t> classifier_widths = {32, 64, 64};
  bool use_attention = true;
  bool use_multiscale = true;
  // Scale (1 or 2) used when use_multiscale is off.
  std::size_t single_scale = 1;
};

// Output extents implied by a config; InvalidConfig when the recipe is
// unusable (empty stage, stage 2 not smaller than stage 1, planes under 2x2).
struct ModelGeometry {
  std::size_t stage1_channels = 0;
  std::size_t stage1_size = 0;
  std::size_t stage2_channels = 0;
  std::size_t stage2_size = 0;
};

ModelGeometry ResolveGeometry(const ModelConfig& config);

struct AttentionModule {
  std::vector<ConvBnRelu> trunk;
  Conv2d trunk_out;  // zero-initialized, so initial masks are uniform
  Conv2d confidence;
  std::vector<ConvBnRelu> subnet;
  Conv2d collapse;

  static AttentionModule Create(std::size_t in_channels, std::size_t spatial,
                                std::size_t attention_channels, std::size_t num_attributes,
                                const std::vector<std::size_t>& classifier_widths);
};

struct Attended {
  Tensor scores;      // Z, [N x C x H x W]
  Tensor mask;        // spatial softmax of Z
  Tensor confidence;  // sigmoid, same shape
  Tensor weighted;    // mask * confidence
};

Attended Attend(AttentionModule& module, const Tensor& features);
Tensor ClassifyAttention(AttentionModule& module, const Tensor& weighted);

// Elementwise arithmetic mean of equally shaped logit tensors.
Tensor AggregateLogits(const std::vector<Tensor>& logits);

struct LevelOutput {
  std::size_t scale = 0;  // 1 or 2
  Attended attended;
  Tensor logits;
};

struct ModelOutput {
  Tensor k1;
  Tensor k2;
  Tensor y_p;
  std::vector<LevelOutput> levels;  // ascending scale
  Tensor y_final;

  // Logits of the given scale, or nullptr when the model has no branch there.
  const LevelOutput* level(std::size_t scale) const;
};

struct ParamEntry {
  std::string name;
  std::string group;  // "primary" or "attention"
  Tensor tensor;
};

class AttributeModel {
 public:
  AttributeModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ModelGeometry& geometry() const { return geometry_; }
  std::size_t num_attributes() const { return config_.num_attributes; }

  // x: [N x input_channels x input_size x input_size].
  std::pair<Tensor, Tensor> ForwardBackbone(const Tensor& x);
  ModelOutput Forward(const Tensor& x);

  void SetTraining(bool training);
  // UnknownGroup unless group is "primary" or "attention".
  void SetFrozen(const std::string& group, bool frozen);
  bool IsFrozen(const std::string& group) const;

  std::vector<ParamEntry> Parameters() const;
  std::vector<NamedBuffer> Buffers();
  // Modules in ascending scale order; the index is not the scale.
  std::vector<AttentionModule>& attention_modules() { return modules_; }
  const std::vector<std::size_t>& attention_scales() const { return scales_; }

 private:
  std::vector<BatchNorm*> AllBatchNorms();

  ModelConfig config_;
  ModelGeometry geometry_;
  std::vector<ConvBnRelu> stage1_;
  std::vector<ConvBnRelu> stage2_;
  Linear primary_;
  std::vector<AttentionModule> modules_;
  std::vector<std::size_t> scales_;
  bool primary_frozen_ = false;
  bool attention_frozen_ = false;
};

}  // namespace attnagg
