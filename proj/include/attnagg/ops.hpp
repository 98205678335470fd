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

// Differentiable tensor operations.
//
// Binary operations broadcast with the trailing-dimension rule: shapes are
// aligned at their last axis, and each aligned pair of extents must be equal
// or one of them must be 1. Missing leading axes count as 1, so a rank-0 or
// single-element tensor broadcasts against anything.

#pragma once

#include <vector>

#include "attnagg/tensor.hpp"

namespace attnagg {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };
enum class UnaryOp { kExp, kLog, kNeg, kRelu, kSigmoid, kLogSigmoid };
enum class ReduceOp { kSum, kMean, kMax };

Shape BroadcastShape(const Shape& a, const Shape& b);

Tensor Elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor Elementwise(BinaryOp op, const Tensor& a, double b);
Tensor Elementwise(UnaryOp op, const Tensor& a);

inline Tensor Add(const Tensor& a, const Tensor& b) { return Elementwise(BinaryOp::kAdd, a, b); }
inline Tensor Sub(const Tensor& a, const Tensor& b) { return Elementwise(BinaryOp::kSub, a, b); }
inline Tensor Mul(const Tensor& a, const Tensor& b) { return Elementwise(BinaryOp::kMul, a, b); }
inline Tensor Div(const Tensor& a, const Tensor& b) { return Elementwise(BinaryOp::kDiv, a, b); }
inline Tensor Add(const Tensor& a, double b) { return Elementwise(BinaryOp::kAdd, a, b); }
inline Tensor Sub(const Tensor& a, double b) { return Elementwise(BinaryOp::kSub, a, b); }
inline Tensor Mul(const Tensor& a, double b) { return Elementwise(BinaryOp::kMul, a, b); }
inline Tensor Div(const Tensor& a, double b) { return Elementwise(BinaryOp::kDiv, a, b); }

inline Tensor Exp(const Tensor& a) { return Elementwise(UnaryOp::kExp, a); }
// DomainError on any non-positive entry.
inline Tensor Log(const Tensor& a) { return Elementwise(UnaryOp::kLog, a); }
inline Tensor Neg(const Tensor& a) { return Elementwise(UnaryOp::kNeg, a); }
inline Tensor Relu(const Tensor& a) { return Elementwise(UnaryOp::kRelu, a); }
// Both evaluate the exponential only on non-positive arguments, so they are
// finite and accurate for any finite input.
inline Tensor Sigmoid(const Tensor& a) { return Elementwise(UnaryOp::kSigmoid, a); }
inline Tensor LogSigmoid(const Tensor& a) { return Elementwise(UnaryOp::kLogSigmoid, a); }

// a^p. Negative bases need an integral exponent; zero bases need p >= 1 so
// the derivative stays finite.
Tensor PowScalar(const Tensor& a, double exponent);

// Axes are removed from the result; reducing every axis gives a rank-0
// tensor. The gradient of kMax goes to the first maximal element in
// row-major order.
Tensor Reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes);
Tensor Reduce(ReduceOp op, const Tensor& a);

inline Tensor Sum(const Tensor& a) { return Reduce(ReduceOp::kSum, a); }
inline Tensor Sum(const Tensor& a, const std::vector<std::size_t>& axes) { return Reduce(ReduceOp::kSum, a, axes); }
inline Tensor Mean(const Tensor& a) { return Reduce(ReduceOp::kMean, a); }
inline Tensor Mean(const Tensor& a, const std::vector<std::size_t>& axes) { return Reduce(ReduceOp::kMean, a, axes); }
inline Tensor Max(const Tensor& a) { return Reduce(ReduceOp::kMax, a); }
inline Tensor Max(const Tensor& a, const std::vector<std::size_t>& axes) { return Reduce(ReduceOp::kMax, a, axes); }

// [m x k] . [k x n] -> [m x n].
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& a);
Tensor Reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return Mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return Div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return Mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return Mul(b, a); }
inline Tensor operator-(const Tensor& a) { return Neg(a); }

}  // namespace attnagg
