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


// The component ablation: one training run per (flag row, seed), scored on
// the validation split.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attnagg/trainer.hpp"

namespace attnagg {

struct AblationRow {
  bool weighted_focal = false;
  bool attention = false;
  bool attention_loss = false;
  bool multiscale = false;
};

// Plain bce, weighted focal, + single-scale attention, + attention loss,
// + second scale.
std::vector<AblationRow> DefaultAblationRows();

TrainConfig ApplyRow(const TrainConfig& base, const AblationRow& row, std::uint64_t seed);

struct AblationResult {
  AblationRow row;
  std::uint64_t seed = 0;
  double map = 0.0;
  double f1 = 0.0;
  std::vector<double> ap;  // per attribute, NaN where not evaluable
};

// Called after each run with the finished trainer.
using AblationHook =
    std::function<void(const AblationRow&, std::uint64_t seed, Trainer& trainer)>;

// Rows outer, seeds inner. Scores come from the final epoch.
std::vector<AblationResult> RunAblation(const TrainConfig& base, const Dataset& train,
                                        const Dataset& val, const std::vector<AblationRow>& rows,
                                        const std::vector<std::uint64_t>& seeds,
                                        const AblationHook& hook = {});

// Header `Lw,Attention,La,Multiscale,seed,map,f1`, flags as 0/1.
std::string AblationCsv(const std::vector<AblationResult>& results);

}  // namespace attnagg
