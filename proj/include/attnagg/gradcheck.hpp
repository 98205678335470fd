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


// Finite-difference verification of every differentiable component, used by
// the `gradcheck` command.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attnagg/tensor.hpp"

namespace attnagg {

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

struct GradcheckResult {
  std::string component;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

// Central differences of the scalar f with respect to x, perturbing x in
// place with gradients disabled.
std::vector<double> NumericGradient(const std::function<Tensor()>& f, Tensor& x,
                                    double eps = 1e-5);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps
// finite-difference roundoff on near-zero gradients from reading as large
// relative errors.
double MaxRelativeError(std::span<const double> analytic, std::span<const double> numeric,
                        double floor = 1e-3);

// Backpropagates f once and compares the gradient of every input.
double CheckGradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                      double eps = 1e-5);

// Every primitive operation, layer and loss on random fixtures.
std::vector<GradcheckResult> OpGradcheck(std::uint64_t seed);
// The total objective of a small full model (2 samples, 3 attributes,
// 16x16 inputs) with respect to every parameter, grouped.
std::vector<GradcheckResult> ModelGradcheck(std::uint64_t seed);

}  // namespace attnagg
