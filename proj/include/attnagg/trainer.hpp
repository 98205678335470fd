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


// Training schedule: an attention-only phase with the primary network
// frozen, then joint training of the full objective, with plateau-based
// learning-rate decay and per-epoch checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "attnagg/data.hpp"
#include "attnagg/losses.hpp"
#include "attnagg/metrics.hpp"
#include "attnagg/model.hpp"
#include "attnagg/optim.hpp"

namespace attnagg {

struct TrainConfig {
  OptimizerConfig optimizer{OptimizerKind::kSgdMomentum};
  double lr = 0.01;
  std::size_t batch_size = 16;
  std::size_t freeze_epochs = 2;
  std::size_t max_epochs = 12;
  double lr_decay_factor = 10.0;
  double lr_floor = 1e-6;
  std::size_t plateau_patience = 3;
  std::size_t burn_in_epochs = 2;
  std::size_t history_window = 5;
  double focal_gamma = 0.5;
  VarianceKind variance = VarianceKind::kPopulation;
  StdGranularity std_granularity = StdGranularity::kPerSample;
  bool use_weighted_focal = true;
  bool use_attention = true;
  bool use_attention_loss = true;
  bool use_multiscale = true;
  std::string monitor = "map";  // "map" or "f1"
  Augmentation augmentation;
  // Widths and recipe; the attention flags and data-derived fields are
  // overwritten from this config and the dataset.
  ModelConfig model;
  std::uint64_t seed = 1;
};

// InvalidConfig on inconsistent values.
void ValidateConfig(const TrainConfig& config);
nlohmann::json ConfigToJson(const TrainConfig& config);
// Missing keys keep defaults; unknown keys are InvalidConfig.
TrainConfig ConfigFromJson(const nlohmann::json& j);

// The model config actually built for a dataset.
ModelConfig ResolveModelConfig(const TrainConfig& config, const Dataset& data);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // "attention" or "joint"
  double lr = 0.0;
  double loss = 0.0;
  double l_w = 0.0;
  std::vector<double> l_a;          // per attention level
  std::vector<double> mean_std;     // mean per-sample dispersion per level
  MetricsReport val;
  double monitored = 0.0;
  double wall_seconds = 0.0;        // not part of the JSON line
};

nlohmann::json RecordToJson(const EpochRecord& record);

// sigmoid(y_final) for every sample, row-major [N x C], eval mode.
std::vector<double> Predict(AttributeModel& model, const Dataset& data, std::size_t batch_size);

class Trainer {
 public:
  Trainer(const TrainConfig& config, const Dataset& train, const Dataset& val);

  // Runs epochs until max_epochs or a scheduler stop. When `checkpoint_dir`
  // is set, a checkpoint is written after every epoch (and once before the
  // first when no epoch has run yet).
  void Fit(const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt,
           std::optional<std::size_t> stop_after = std::nullopt);
  // One epoch; returns false once training is over.
  bool RunEpoch();

  void SaveCheckpoint(const std::filesystem::path& dir);
  // Restores model, optimizer, histories, schedule and records. The
  // config is read from the checkpoint.
  static Trainer Resume(const std::filesystem::path& dir, const Dataset& train,
                        const Dataset& val);

  const TrainConfig& config() const { return config_; }
  AttributeModel& model() { return model_; }
  const std::vector<EpochRecord>& records() const { return records_; }
  const std::vector<PredictionHistory>& histories() const { return histories_; }
  const ClassWeights& class_weights() const { return loss_config_.class_weights; }
  std::size_t epoch() const { return epoch_; }
  double lr() const { return scheduler_.lr(); }
  bool finished() const { return stopped_ || epoch_ >= config_.max_epochs; }

  // Called after each batch with (epoch, batch index, breakdown).
  std::function<void(std::size_t, std::size_t, const LossBreakdown&)> on_batch;

 private:
  EpochRecord TrainEpoch();

  TrainConfig config_;
  const Dataset* train_;
  const Dataset* val_;
  AttributeModel model_;
  Optimizer optimizer_;
  PlateauScheduler scheduler_;
  LossConfig loss_config_;
  std::vector<PredictionHistory> histories_;
  std::vector<EpochRecord> records_;
  std::size_t epoch_ = 0;
  bool stopped_ = false;
};

// The trained network stored in a checkpoint directory, built for the
// dataset's shape. ShapeMismatch when the attribute count or image size
// differs from the one trained on.
AttributeModel LoadTrainedModel(const std::filesystem::path& checkpoint, const Dataset& data);

// epochs.jsonl content for a run: one compact JSON object per line.
std::string EpochsJsonl(const std::vector<EpochRecord>& records);

}  // namespace attnagg
