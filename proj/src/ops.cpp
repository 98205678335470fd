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

#include "attnagg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "attnagg/error.hpp"
#include "attnagg/numeric.hpp"

namespace attnagg {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutableMap = Eigen::Map<RowMatrix>;

// For every output element, the flat index it reads in each operand.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

std::vector<std::size_t> BroadcastIndex(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  // Row-major strides of `in`, zeroed on broadcast axes, aligned to `out`.
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    stride[i + offset] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const std::size_t n = NumElements(out);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t flat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    index[k] = flat;
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      flat += stride[axis];
      if (counter[axis] < out[axis]) break;
      flat -= stride[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return index;
}

BroadcastPlan PlanBroadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = BroadcastShape(a, b);
  plan.same = a == b;
  if (!plan.same) {
    plan.a_index = BroadcastIndex(a, plan.out);
    plan.b_index = BroadcastIndex(b, plan.out);
  }
  return plan;
}

const char* BinaryName(BinaryOp op) {
  switch (op) {
    case BinaryOp::kAdd: return "add";
    case BinaryOp::kSub: return "sub";
    case BinaryOp::kMul: return "mul";
    case BinaryOp::kDiv: return "div";
  }
  return "binary";
}

double ApplyBinary(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::kAdd: return x + y;
    case BinaryOp::kSub: return x - y;
    case BinaryOp::kMul: return x * y;
    case BinaryOp::kDiv: return x / y;
  }
  return 0.0;
}

void CheckDivisor(BinaryOp op, std::span<const double> divisor) {
  if (op != BinaryOp::kDiv) return;
  for (double v : divisor) {
    if (v == 0.0) Fail(ErrorCode::kDomainError, "division by zero");
  }
}

}  // namespace

Shape BroadcastShape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      Fail(ErrorCode::kShapeMismatch, "cannot broadcast " + ShapeToString(a) +
                                          " with " + ShapeToString(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor Elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape());
  CheckDivisor(op, b.values());
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = NumElements(plan.out);
  std::vector<double> out(n);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ApplyBinary(op, av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = ApplyBinary(op, av[plan.a_index[i]], bv[plan.b_index[i]]);
    }
  }
  Shape shape = plan.out;
  return autodiff::Record(
      BinaryName(op), std::move(shape), std::move(out), {a, b},
      [op, a, b, plan = std::move(plan)](std::span<const double> g,
                                         autodiff::InputGrads& grads) {
        const auto av = a.values();
        const auto bv = b.values();
        const std::size_t n = g.size();
        auto ia = [&](std::size_t i) { return plan.same ? i : plan.a_index[i]; };
        auto ib = [&](std::size_t i) { return plan.same ? i : plan.b_index[i]; };
        if (grads.wants(0)) {
          auto ga = grads[0];
          for (std::size_t i = 0; i < n; ++i) {
            switch (op) {
              case BinaryOp::kAdd:
              case BinaryOp::kSub: ga[ia(i)] += g[i]; break;
              case BinaryOp::kMul: ga[ia(i)] += g[i] * bv[ib(i)]; break;
              case BinaryOp::kDiv: ga[ia(i)] += g[i] / bv[ib(i)]; break;
            }
          }
        }
        if (grads.wants(1)) {
          auto gb = grads[1];
          for (std::size_t i = 0; i < n; ++i) {
            const double x = av[ia(i)];
            const double y = bv[ib(i)];
            switch (op) {
              case BinaryOp::kAdd: gb[ib(i)] += g[i]; break;
              case BinaryOp::kSub: gb[ib(i)] -= g[i]; break;
              case BinaryOp::kMul: gb[ib(i)] += g[i] * x; break;
              case BinaryOp::kDiv: gb[ib(i)] -= g[i] * x / (y * y); break;
            }
          }
        }
      });
}

Tensor Elementwise(BinaryOp op, const Tensor& a, double b) {
  if (op == BinaryOp::kDiv && b == 0.0) {
    Fail(ErrorCode::kDomainError, "division by zero");
  }
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = ApplyBinary(op, av[i], b);
  return autodiff::Record(BinaryName(op), a.shape(), std::move(out), {a},
                          [op, b](std::span<const double> g,
                                  autodiff::InputGrads& grads) {
                            auto ga = grads[0];
                            double scale = 1.0;
                            if (op == BinaryOp::kMul) scale = b;
                            if (op == BinaryOp::kDiv) scale = 1.0 / b;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              ga[i] += g[i] * scale;
                            }
                          });
}

Tensor Elementwise(UnaryOp op, const Tensor& a) {
  const auto av = a.values();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  const char* kind = "unary";
  switch (op) {
    case UnaryOp::kExp:
      kind = "exp";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
    case UnaryOp::kLog:
      kind = "log";
      for (std::size_t i = 0; i < n; ++i) {
        if (!(av[i] > 0.0)) {
          Fail(ErrorCode::kDomainError,
               "log of non-positive value " + std::to_string(av[i]));
        }
        out[i] = std::log(av[i]);
      }
      break;
    case UnaryOp::kNeg:
      kind = "neg";
      for (std::size_t i = 0; i < n; ++i) out[i] = -av[i];
      break;
    case UnaryOp::kRelu:
      kind = "relu";
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
      break;
    case UnaryOp::kSigmoid:
      kind = "sigmoid";
      for (std::size_t i = 0; i < n; ++i) out[i] = StableSigmoid(av[i]);
      break;
    case UnaryOp::kLogSigmoid:
      kind = "log_sigmoid";
      for (std::size_t i = 0; i < n; ++i) out[i] = StableLogSigmoid(av[i]);
      break;
  }
  // Sigmoid and exp reuse their forward output in backward.
  std::vector<double> saved;
  if (op == UnaryOp::kExp || op == UnaryOp::kSigmoid) saved = out;
  return autodiff::Record(
      kind, a.shape(), std::move(out), {a},
      [op, a, saved = std::move(saved)](std::span<const double> g,
                                        autodiff::InputGrads& grads) {
        auto ga = grads[0];
        const auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case UnaryOp::kExp: ga[i] += g[i] * saved[i]; break;
            case UnaryOp::kLog: ga[i] += g[i] / av[i]; break;
            case UnaryOp::kNeg: ga[i] -= g[i]; break;
            case UnaryOp::kRelu: ga[i] += av[i] > 0.0 ? g[i] : 0.0; break;
            case UnaryOp::kSigmoid:
              ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
              break;
            case UnaryOp::kLogSigmoid:
              ga[i] += g[i] * StableSigmoid(-av[i]);
              break;
          }
        }
      });
}

Tensor PowScalar(const Tensor& a, double exponent) {
  const auto av = a.values();
  const bool integral = std::floor(exponent) == exponent;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0 && !integral) {
      Fail(ErrorCode::kDomainError, "negative base with fractional exponent");
    }
    if (av[i] == 0.0 && exponent < 1.0 && exponent != 0.0) {
      Fail(ErrorCode::kDomainError, "zero base with exponent below one");
    }
    out[i] = std::pow(av[i], exponent);
  }
  return autodiff::Record("pow_scalar", a.shape(), std::move(out), {a},
                          [a, exponent](std::span<const double> g,
                                        autodiff::InputGrads& grads) {
                            auto ga = grads[0];
                            const auto av = a.values();
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              if (exponent == 0.0) continue;
                              ga[i] += g[i] * exponent *
                                       std::pow(av[i], exponent - 1.0);
                            }
                          });
}

Tensor Reduce(ReduceOp op, const Tensor& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return Reduce(op, a, axes);
}

Tensor Reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  std::vector<bool> reduced(in.size(), false);
  for (auto axis : axes) {
    if (axis >= in.size() || reduced[axis]) {
      Fail(ErrorCode::kInvalidAxis, "axis " + std::to_string(axis) +
                                        " invalid for " + ShapeToString(in));
    }
    reduced[axis] = true;
  }
  Shape out_shape;
  Shape kept_shape = in;  // `in` with reduced axes set to 1
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reduced[i]) {
      kept_shape[i] = 1;
    } else {
      out_shape.push_back(in[i]);
    }
  }
  // Map each input element to its output slot by broadcasting the output
  // (viewed with unit extents on reduced axes) back over the input.
  auto out_index = BroadcastIndex(kept_shape, in);
  const std::size_t n_out = NumElements(out_shape);
  const std::size_t group = a.numel() / n_out;
  const auto av = a.values();

  std::vector<double> out(n_out, 0.0);
  std::vector<std::size_t> argmax;
  switch (op) {
    case ReduceOp::kSum:
    case ReduceOp::kMean:
      for (std::size_t i = 0; i < av.size(); ++i) out[out_index[i]] += av[i];
      if (op == ReduceOp::kMean) {
        for (auto& v : out) v /= static_cast<double>(group);
      }
      break;
    case ReduceOp::kMax: {
      argmax.assign(n_out, av.size());
      for (std::size_t i = 0; i < av.size(); ++i) {
        auto& best = argmax[out_index[i]];
        if (best == av.size() || av[i] > av[best]) best = i;
      }
      for (std::size_t o = 0; o < n_out; ++o) out[o] = av[argmax[o]];
      break;
    }
  }
  const char* kind = op == ReduceOp::kSum ? "sum" : op == ReduceOp::kMean ? "mean" : "max";
  return autodiff::Record(
      kind, std::move(out_shape), std::move(out), {a},
      [op, group, out_index = std::move(out_index),
       argmax = std::move(argmax)](std::span<const double> g,
                                   autodiff::InputGrads& grads) {
        auto ga = grads[0];
        if (op == ReduceOp::kMax) {
          for (std::size_t o = 0; o < g.size(); ++o) ga[argmax[o]] += g[o];
          return;
        }
        const double scale = op == ReduceOp::kMean ? 1.0 / static_cast<double>(group) : 1.0;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[out_index[i]] * scale;
      });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    Fail(ErrorCode::kShapeMismatch, "matmul of " + ShapeToString(a.shape()) +
                                        " and " + ShapeToString(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutableMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return autodiff::Record(
      "matmul", {a.dim(0), b.dim(1)}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double> g, autodiff::InputGrads& grads) {
        ConstMap dc(g.data(), m, n);
        if (grads.wants(0)) {
          MutableMap(grads[0].data(), m, k).noalias() +=
              dc * ConstMap(b.values().data(), k, n).transpose();
        }
        if (grads.wants(1)) {
          MutableMap(grads[1].data(), k, n).noalias() +=
              ConstMap(a.values().data(), m, k).transpose() * dc;
        }
      });
}

Tensor Transpose(const Tensor& a) {
  if (a.rank() != 2) {
    Fail(ErrorCode::kShapeMismatch,
         "transpose needs rank 2, got " + ShapeToString(a.shape()));
  }
  const std::size_t rows = a.dim(0);
  const std::size_t cols = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = av[r * cols + c];
  }
  return autodiff::Record("transpose", {cols, rows}, std::move(out), {a},
                          [rows, cols](std::span<const double> g,
                                       autodiff::InputGrads& grads) {
                            auto ga = grads[0];
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                ga[r * cols + c] += g[c * rows + r];
                              }
                            }
                          });
}

Tensor Reshape(const Tensor& a, Shape shape) {
  if (NumElements(shape) != a.numel()) {
    Fail(ErrorCode::kShapeMismatch, "cannot reshape " + ShapeToString(a.shape()) +
                                        " to " + ShapeToString(shape));
  }
  const auto av = a.values();
  return autodiff::Record("reshape", std::move(shape),
                          std::vector<double>(av.begin(), av.end()), {a},
                          [](std::span<const double> g, autodiff::InputGrads& grads) {
                            auto ga = grads[0];
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          });
}

}  // namespace attnagg
