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


// Parameter updates and the plateau learning-rate schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnagg/model.hpp"

namespace attnagg {

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
void SgdStep(std::span<double> param, std::span<const double> grad,
             std::vector<double>& velocity, double lr, double momentum, double weight_decay);

// Bias-corrected Adam with the decay term added to the gradient. `step` is
// the number of updates already applied and is incremented.
void AdamStep(std::span<double> param, std::span<const double> grad, std::vector<double>& m,
              std::vector<double>& v, std::uint64_t& step, double lr, double beta1,
              double beta2, double eps, double weight_decay);

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::vector<ParamEntry> params);

  // Updates every parameter that currently requires gradients. Parameters
  // without an accumulated gradient are treated as having a zero gradient.
  void Step(double lr);
  void ZeroGrad();

  // optimizer.json plus one tensor file per state array under `dir`.
  void Save(const std::filesystem::path& dir) const;
  void Load(const std::filesystem::path& dir);

  bool operator==(const Optimizer& other) const;

 private:
  struct State {
    std::vector<double> first;   // velocity or first moment
    std::vector<double> second;  // Adam only
    std::uint64_t step = 0;
  };

  OptimizerConfig config_;
  std::vector<ParamEntry> params_;
  std::map<std::string, State> state_;
};

// Divides the learning rate by `factor` after `patience` consecutive
// observations without improvement over the best value seen (higher is
// better). When the next decay would bring the rate to or below `floor`,
// Observe reports a stop instead.
class PlateauScheduler {
 public:
  enum class Action { kKeep, kDecayed, kStop };

  PlateauScheduler(double lr, double factor, double floor, std::size_t patience);

  Action Observe(double metric);

  double lr() const { return lr_; }
  std::optional<double> best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  void Restore(double lr, std::optional<double> best, std::size_t bad_epochs);

 private:
  double lr_;
  double factor_;
  double floor_;
  std::size_t patience_;
  std::optional<double> best_;
  std::size_t bad_epochs_ = 0;
};

}  // namespace attnagg
