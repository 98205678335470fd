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


#include "attnagg/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "attnagg/error.hpp"
#include "attnagg/tensor_io.hpp"

namespace attnagg {

void SaveModelState(AttributeModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  for (const auto& p : model.Parameters()) {
    const auto file = p.name + ".txt";
    SaveTensor(dir / file, p.tensor);
    manifest << p.name << ' ' << file << '\n';
  }
  for (const auto& b : model.Buffers()) {
    const auto file = b.name + ".txt";
    SaveTensor(dir / file, Tensor::From({b.values->size()}, *b.values));
    manifest << b.name << ' ' << file << '\n';
  }
  if (!manifest) Fail(ErrorCode::kIo, "cannot write " + (dir / "manifest.txt").string());
}

void LoadModelState(AttributeModel& model, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) Fail(ErrorCode::kIo, "cannot read " + (dir / "manifest.txt").string());
  std::map<std::string, std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, file;
    if (!(row >> name >> file)) Fail(ErrorCode::kIo, "bad manifest line: " + line);
    files[name] = file;
  }
  auto load = [&](const std::string& name, std::size_t size) {
    auto it = files.find(name);
    if (it == files.end()) Fail(ErrorCode::kIo, "checkpoint lacks " + name);
    auto t = LoadTensor(dir / it->second);
    if (t.numel() != size) {
      Fail(ErrorCode::kShapeMismatch, "checkpoint entry " + name + " has " +
                                          std::to_string(t.numel()) + " values, model needs " +
                                          std::to_string(size));
    }
    return t;
  };
  for (auto& p : model.Parameters()) {
    auto t = load(p.name, p.tensor.numel());
    if (t.shape() != p.tensor.shape()) {
      Fail(ErrorCode::kShapeMismatch, "checkpoint entry " + p.name + " has shape " +
                                          ShapeToString(t.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(t.values().begin(), t.values().end(), dst.begin());
  }
  for (auto& b : model.Buffers()) {
    auto t = load(b.name, b.values->size());
    b.values->assign(t.values().begin(), t.values().end());
  }
}

}  // namespace attnagg
