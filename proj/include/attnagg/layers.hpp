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

// Layer vocabulary of the attribute model. Layers are plain parameter
// holders; the differentiable work happens in the free functions.

#pragma once

#include <string>
#include <vector>

#include "attnagg/rng.hpp"
#include "attnagg/tensor.hpp"

namespace attnagg {

// A named trainable tensor. The handle shares storage with the layer.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// A named non-trainable state array (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

std::size_t ConvOutputExtent(std::size_t input, std::size_t kernel,
                             std::size_t stride, std::size_t padding);

// x: [N x C_in x H x W], weight: [C_out x C_in x k x k], bias: [C_out].
// Square kernels, zero padding. Computed as an im2col gather followed by a
// single matrix product over the whole batch.
Tensor Conv2dForward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     std::size_t stride, std::size_t padding);

struct Conv2d {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2d Create(std::size_t in_channels, std::size_t out_channels,
                       std::size_t kernel, std::size_t stride = 1,
                       std::size_t padding = 0);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  Tensor Forward(const Tensor& x) const {
    return Conv2dForward(x, weight, bias, stride, padding);
  }
  void CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

enum class BatchNormMode { kTrain, kEval };

// Per-channel normalization over every axis except axis 1. Train mode uses
// the biased batch variance and updates
//   running = momentum * running + (1 - momentum) * batch.
// A train-mode batch with a single element per channel has variance 0 and is
// normalized by sqrt(eps).
Tensor BatchNormForward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<double>& running_mean,
                        std::vector<double>& running_var, double momentum,
                        double eps, BatchNormMode mode);

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  BatchNormMode mode = BatchNormMode::kTrain;

  static BatchNorm Create(std::size_t channels);

  Tensor Forward(const Tensor& x) {
    return BatchNormForward(x, gamma, beta, running_mean, running_var, momentum,
                            eps, mode);
  }
  void CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);
};

enum class ActivationKind { kRelu, kSigmoid };

Tensor Activation(ActivationKind kind, const Tensor& x);

// Softmax over the H x W positions of each (sample, channel) plane of an
// [N x C x H x W] tensor, with the plane maximum subtracted first.
Tensor SpatialSoftmax(const Tensor& z);

// Convolution whose kernel covers the whole input plane: [N x C x H x W] with
// a k = H = W kernel gives [N x C_out x 1 x 1].
Tensor GlobalCollapseConv(const Tensor& x, const Conv2d& layer);

struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Linear Create(std::size_t in_features, std::size_t out_features);

  // x: [N x in] -> [N x out]
  Tensor Forward(const Tensor& x) const;
  void CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Convolution, batch normalization, ReLU.
struct ConvBnRelu {
  Conv2d conv;
  BatchNorm bn;

  static ConvBnRelu Create(std::size_t in_channels, std::size_t out_channels,
                           std::size_t kernel, std::size_t stride = 1);

  Tensor Forward(const Tensor& x);
  void CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out);
};

// Glorot/Xavier uniform bound sqrt(6 / (fan_in + fan_out)).
double XavierBound(std::size_t fan_in, std::size_t fan_out);

// Weights ~ U(-bound, bound) drawn in row-major order, biases zero.
void InitParams(Conv2d& layer, Rng& rng);
void InitParams(Linear& layer, Rng& rng);
void InitParams(ConvBnRelu& layer, Rng& rng);

}  // namespace attnagg
