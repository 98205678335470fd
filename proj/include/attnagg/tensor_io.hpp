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

// Flat text tensor format:
//
//   shape: d0 d1 ...
//   <value 0>
//   <value 1>
//   ...
//
// Values are in row-major order, one per line, printed with 17 significant
// digits so that a dump/load round trip is bit-exact. A rank-0 tensor has an
// empty extent list ("shape:").

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "attnagg/tensor.hpp"

namespace attnagg {

// 17 significant digits, shortest exponent form ("%.17g").
std::string FormatDouble(double value);
double ParseDouble(const std::string& text);

void WriteTensor(std::ostream& out, const Tensor& tensor);
Tensor ReadTensor(std::istream& in);

void SaveTensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor LoadTensor(const std::filesystem::path& path);

}  // namespace attnagg
