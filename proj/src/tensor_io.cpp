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

#include "attnagg/tensor_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "attnagg/error.hpp"

namespace attnagg {

std::string FormatDouble(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

double ParseDouble(const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || errno == ERANGE) {
    Fail(ErrorCode::kIo, "cannot parse number '" + text + "'");
  }
  while (*end == ' ' || *end == '\r' || *end == '\t') ++end;
  if (*end != '\0') Fail(ErrorCode::kIo, "trailing characters in '" + text + "'");
  return v;
}

void WriteTensor(std::ostream& out, const Tensor& tensor) {
  out << "shape:";
  for (auto d : tensor.shape()) out << ' ' << d;
  out << '\n';
  std::string text;
  for (double v : tensor.values()) {
    text += FormatDouble(v);
    text += '\n';
  }
  out << text;
}

Tensor ReadTensor(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("shape:", 0) != 0) {
    Fail(ErrorCode::kIo, "tensor file must start with 'shape:'");
  }
  std::istringstream header(line.substr(6));
  Shape shape;
  long long d;
  while (header >> d) {
    if (d <= 0) Fail(ErrorCode::kIo, "non-positive extent in tensor header");
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (!header.eof()) Fail(ErrorCode::kIo, "malformed tensor header: " + line);
  const std::size_t n = NumElements(shape);
  std::vector<double> data;
  data.reserve(n);
  while (data.size() < n && std::getline(in, line)) {
    if (line.empty()) continue;
    data.push_back(ParseDouble(line));
  }
  if (data.size() != n) {
    Fail(ErrorCode::kShapeMismatch, "tensor file has " + std::to_string(data.size()) +
                                        " values, header needs " + std::to_string(n));
  }
  while (std::getline(in, line)) {
    if (!line.empty()) Fail(ErrorCode::kShapeMismatch, "extra values in tensor file");
  }
  return Tensor::From(std::move(shape), std::move(data));
}

void SaveTensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  WriteTensor(out, tensor);
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

Tensor LoadTensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot read " + path.string());
  return ReadTensor(in);
}

}  // namespace attnagg
