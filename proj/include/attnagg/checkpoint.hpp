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


// Parameter checkpoints: `manifest.txt` maps each parameter or batch-norm
// statistic name to a tensor file in the same directory.

#pragma once

#include <filesystem>

#include "attnagg/model.hpp"

namespace attnagg {

void SaveModelState(AttributeModel& model, const std::filesystem::path& dir);
// Every name in the model must appear in the manifest with a matching size.
void LoadModelState(AttributeModel& model, const std::filesystem::path& dir);

}  // namespace attnagg
