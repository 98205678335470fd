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

#include "attnagg/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "attnagg/error.hpp"
#include "attnagg/ops.hpp"

namespace attnagg {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutableMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t o, k;           // filters
  std::size_t oh, ow;         // output plane
  std::size_t stride, padding;
  std::size_t patch() const { return c * k * k; }
  std::size_t positions() const { return oh * ow; }
};

// cols[(ci * k + ki) * k + kj][n * P + oy * OW + ox]
void Im2Col(const ConvGeometry& g, std::span<const double> x, std::vector<double>& cols) {
  const std::size_t np = g.n * g.positions();
  cols.assign(g.patch() * np, 0.0);
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols.data() + ((ci * g.k + ki) * g.k + kj) * np;
        for (std::size_t s = 0; s < g.n; ++s) {
          const double* plane = x.data() + (s * g.c + ci) * g.h * g.w;
          double* dst = row + s * g.positions();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              dst[oy * g.ow + ox] = plane[iy * g.w + ix];
            }
          }
        }
      }
    }
  }
}

void Col2ImAdd(const ConvGeometry& g, const std::vector<double>& cols, std::span<double> dx) {
  const std::size_t np = g.n * g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols.data() + ((ci * g.k + ki) * g.k + kj) * np;
        for (std::size_t s = 0; s < g.n; ++s) {
          double* plane = dx.data() + (s * g.c + ci) * g.h * g.w;
          const double* src = row + s * g.positions();
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              plane[iy * g.w + ix] += src[oy * g.ow + ox];
            }
          }
        }
      }
    }
  }
}

void AppendParam(std::vector<NamedTensor>& out, const std::string& prefix,
                 const char* name, const Tensor& t) {
  out.push_back({prefix + "." + name, t});
}

void UniformFill(Tensor& t, double bound, Rng& rng) {
  for (auto& v : t.mutable_values()) v = rng.Uniform(-bound, bound);
}

void ZeroFill(Tensor& t) {
  for (auto& v : t.mutable_values()) v = 0.0;
}

}  // namespace

std::size_t ConvOutputExtent(std::size_t input, std::size_t kernel,
                             std::size_t stride, std::size_t padding) {
  if (kernel == 0 || stride == 0 || input + 2 * padding < kernel) return 0;
  return (input + 2 * padding - kernel) / stride + 1;
}

Tensor Conv2dForward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 ||
      weight.dim(2) != weight.dim(3) || weight.dim(1) != x.dim(1) ||
      bias.dim(0) != weight.dim(0)) {
    Fail(ErrorCode::kShapeMismatch,
         "conv2d input " + ShapeToString(x.shape()) + ", kernel " +
             ShapeToString(weight.shape()) + ", bias " + ShapeToString(bias.shape()));
  }
  ConvGeometry g;
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.padding = padding;
  g.oh = ConvOutputExtent(g.h, g.k, stride, padding);
  g.ow = ConvOutputExtent(g.w, g.k, stride, padding);
  if (g.oh == 0 || g.ow == 0) {
    Fail(ErrorCode::kShapeMismatch, "conv2d output would be empty for input " +
                                        ShapeToString(x.shape()));
  }

  auto cols = std::make_shared<std::vector<double>>();
  Im2Col(g, x.values(), *cols);
  const auto np = static_cast<Eigen::Index>(g.n * g.positions());
  const auto kk = static_cast<Eigen::Index>(g.patch());
  const auto oo = static_cast<Eigen::Index>(g.o);
  RowMatrix product = ConstMap(weight.values().data(), oo, kk) * ConstMap(cols->data(), kk, np);

  std::vector<double> out(g.n * g.o * g.positions());
  const auto bv = bias.values();
  const std::size_t p = g.positions();
  for (std::size_t s = 0; s < g.n; ++s) {
    for (std::size_t o = 0; o < g.o; ++o) {
      const double* src = product.data() + o * g.n * p + s * p;
      double* dst = out.data() + (s * g.o + o) * p;
      for (std::size_t i = 0; i < p; ++i) dst[i] = src[i] + bv[o];
    }
  }

  return autodiff::Record(
      "conv2d", {g.n, g.o, g.oh, g.ow}, std::move(out), {x, weight, bias},
      [g, weight, cols](std::span<const double> grad, autodiff::InputGrads& grads) {
        const std::size_t p = g.positions();
        const auto np = static_cast<Eigen::Index>(g.n * p);
        const auto kk = static_cast<Eigen::Index>(g.patch());
        const auto oo = static_cast<Eigen::Index>(g.o);
        RowMatrix dout(oo, np);
        for (std::size_t s = 0; s < g.n; ++s) {
          for (std::size_t o = 0; o < g.o; ++o) {
            const double* src = grad.data() + (s * g.o + o) * p;
            double* dst = dout.data() + o * g.n * p + s * p;
            for (std::size_t i = 0; i < p; ++i) dst[i] = src[i];
          }
        }
        if (grads.wants(1)) {
          MutableMap(grads[1].data(), oo, kk).noalias() +=
              dout * ConstMap(cols->data(), kk, np).transpose();
        }
        if (grads.wants(2)) {
          auto gb = grads[2];
          for (std::size_t o = 0; o < g.o; ++o) gb[o] += dout.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (grads.wants(0)) {
          std::vector<double> dcols(static_cast<std::size_t>(kk * np));
          MutableMap(dcols.data(), kk, np).noalias() =
              ConstMap(weight.values().data(), oo, kk).transpose() * dout;
          Col2ImAdd(g, dcols, grads[0]);
        }
      });
}

Conv2d Conv2d::Create(std::size_t in_channels, std::size_t out_channels,
                      std::size_t kernel, std::size_t stride, std::size_t padding) {
  Conv2d layer;
  layer.weight = Tensor::Zeros({out_channels, in_channels, kernel, kernel}, true);
  layer.bias = Tensor::Zeros({out_channels}, true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

void Conv2d::CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const {
  AppendParam(out, prefix, "weight", weight);
  AppendParam(out, prefix, "bias", bias);
}

Tensor BatchNormForward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<double>& running_mean,
                        std::vector<double>& running_var, double momentum,
                        double eps, BatchNormMode mode) {
  if (x.rank() < 2 || gamma.rank() != 1 || gamma.dim(0) != x.dim(1) ||
      beta.shape() != gamma.shape() || running_mean.size() != x.dim(1) ||
      running_var.size() != x.dim(1)) {
    Fail(ErrorCode::kShapeMismatch, "batchnorm input " + ShapeToString(x.shape()) +
                                        " with " + std::to_string(gamma.numel()) +
                                        " channels");
  }
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t inner = x.numel() / (n * c);
  const double count = static_cast<double>(n * inner);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();

  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (mode == BatchNormMode::kTrain) {
    std::vector<double> var(c, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv.data() + (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) mean[ch] += p[i];
      }
    }
    for (auto& m : mean) m /= count;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv.data() + (s * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = p[i] - mean[ch];
          var[ch] += d * d;
        }
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      var[ch] /= count;
      inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
      running_mean[ch] = momentum * running_mean[ch] + (1.0 - momentum) * mean[ch];
      running_var[ch] = momentum * running_var[ch] + (1.0 - momentum) * var[ch];
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double h = (xv[base + i] - mean[ch]) * inv_std[ch];
        (*xhat)[base + i] = h;
        out[base + i] = gv[ch] * h + bv[ch];
      }
    }
  }

  const bool train = mode == BatchNormMode::kTrain;
  return autodiff::Record(
      train ? "batchnorm_train" : "batchnorm_eval", x.shape(), std::move(out),
      {x, gamma, beta},
      [n, c, inner, count, train, gamma, xhat, inv_std = std::move(inv_std)](
          std::span<const double> g, autodiff::InputGrads& grads) {
        const auto gv = gamma.values();
        std::vector<double> sum_g(c, 0.0), sum_gh(c, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g[ch] += g[base + i];
              sum_gh[ch] += g[base + i] * (*xhat)[base + i];
            }
          }
        }
        if (grads.wants(1)) {
          auto gg = grads[1];
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gh[ch];
        }
        if (grads.wants(2)) {
          auto gb = grads[2];
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!grads.wants(0)) return;
        auto gx = grads[0];
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * inner;
            const double scale = gv[ch] * inv_std[ch];
            if (!train) {
              for (std::size_t i = 0; i < inner; ++i) gx[base + i] += scale * g[base + i];
              continue;
            }
            // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
            const double mg = sum_g[ch] / count;
            const double mgh = sum_gh[ch] / count;
            for (std::size_t i = 0; i < inner; ++i) {
              gx[base + i] += scale * (g[base + i] - mg - (*xhat)[base + i] * mgh);
            }
          }
        }
      });
}

BatchNorm BatchNorm::Create(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor::Full({channels}, 1.0, true);
  bn.beta = Tensor::Zeros({channels}, true);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

void BatchNorm::CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const {
  AppendParam(out, prefix, "gamma", gamma);
  AppendParam(out, prefix, "beta", beta);
}

void BatchNorm::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

Tensor Activation(ActivationKind kind, const Tensor& x) {
  return kind == ActivationKind::kRelu ? Relu(x) : Sigmoid(x);
}

Tensor SpatialSoftmax(const Tensor& z) {
  if (z.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch,
         "spatial softmax needs [N x C x H x W], got " + ShapeToString(z.shape()));
  }
  const std::size_t planes = z.dim(0) * z.dim(1);
  const std::size_t area = z.dim(2) * z.dim(3);
  const auto zv = z.values();
  auto out = std::make_shared<std::vector<double>>(zv.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = zv.data() + p * area;
    double* dst = out->data() + p * area;
    double peak = src[0];
    for (std::size_t i = 1; i < area; ++i) peak = std::max(peak, src[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < area; ++i) {
      dst[i] = std::exp(src[i] - peak);
      total += dst[i];
    }
    for (std::size_t i = 0; i < area; ++i) dst[i] /= total;
  }
  std::vector<double> values = *out;
  return autodiff::Record(
      "spatial_softmax", z.shape(), std::move(values), {z},
      [planes, area, out](std::span<const double> g, autodiff::InputGrads& grads) {
        auto gz = grads[0];
        // dz = a * (g - sum(g * a)) per plane
        for (std::size_t p = 0; p < planes; ++p) {
          const double* a = out->data() + p * area;
          const double* gp = g.data() + p * area;
          double dot = 0.0;
          for (std::size_t i = 0; i < area; ++i) dot += gp[i] * a[i];
          for (std::size_t i = 0; i < area; ++i) gz[p * area + i] += a[i] * (gp[i] - dot);
        }
      });
}

Tensor GlobalCollapseConv(const Tensor& x, const Conv2d& layer) {
  if (x.rank() != 4 || x.dim(2) != layer.kernel() || x.dim(3) != layer.kernel()) {
    Fail(ErrorCode::kShapeMismatch, "collapse kernel " + std::to_string(layer.kernel()) +
                                        " does not match input " + ShapeToString(x.shape()));
  }
  return Conv2dForward(x, layer.weight, layer.bias, 1, 0);
}

Linear Linear::Create(std::size_t in_features, std::size_t out_features) {
  Linear layer;
  layer.weight = Tensor::Zeros({out_features, in_features}, true);
  layer.bias = Tensor::Zeros({out_features}, true);
  return layer;
}

Tensor Linear::Forward(const Tensor& x) const {
  return Add(MatMul(x, Transpose(weight)), bias);
}

void Linear::CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const {
  AppendParam(out, prefix, "weight", weight);
  AppendParam(out, prefix, "bias", bias);
}

ConvBnRelu ConvBnRelu::Create(std::size_t in_channels, std::size_t out_channels,
                              std::size_t kernel, std::size_t stride) {
  return {Conv2d::Create(in_channels, out_channels, kernel, stride, kernel / 2),
          BatchNorm::Create(out_channels)};
}

Tensor ConvBnRelu::Forward(const Tensor& x) { return Relu(bn.Forward(conv.Forward(x))); }

void ConvBnRelu::CollectParams(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv.CollectParams(prefix + ".conv", out);
  bn.CollectParams(prefix + ".bn", out);
}

void ConvBnRelu::CollectBuffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  bn.CollectBuffers(prefix + ".bn", out);
}

double XavierBound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void InitParams(Conv2d& layer, Rng& rng) {
  const std::size_t area = layer.kernel() * layer.kernel();
  UniformFill(layer.weight,
              XavierBound(layer.in_channels() * area, layer.out_channels() * area), rng);
  ZeroFill(layer.bias);
}

void InitParams(Linear& layer, Rng& rng) {
  UniformFill(layer.weight, XavierBound(layer.weight.dim(1), layer.weight.dim(0)), rng);
  ZeroFill(layer.bias);
}

void InitParams(ConvBnRelu& layer, Rng& rng) { InitParams(layer.conv, rng); }

}  // namespace attnagg
