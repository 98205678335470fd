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


#include "attnagg/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "attnagg/checkpoint.hpp"
#include "attnagg/error.hpp"
#include "attnagg/numeric.hpp"
#include "attnagg/ops.hpp"

namespace attnagg {

namespace {

using nlohmann::json;

constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;
constexpr std::uint64_t kAugmentStream = 0x6175676dULL;

json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kIo, path.string() + ": " + e.what());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
}

MetricsReport ReportFromJson(const json& j) {
  MetricsReport r;
  r.protocol = j.contains("ma") ? Protocol::kPeta : Protocol::kMap;
  r.attributes = j.at("attributes").get<std::vector<std::size_t>>();
  r.ap = j.at("ap").get<std::vector<double>>();
  r.map = j.at("map").get<double>();
  r.threshold = j.at("threshold").get<double>();
  if (r.protocol == Protocol::kPeta) {
    r.ma = j.at("ma").get<double>();
    r.example.accuracy = j.at("ex_accuracy").get<double>();
    r.example.precision = j.at("ex_precision").get<double>();
    r.example.recall = j.at("ex_recall").get<double>();
    r.example.f1 = j.at("ex_f1").get<double>();
  }
  return r;
}

EpochRecord RecordFromJson(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.phase = j.at("phase").get<std::string>();
  r.lr = j.at("lr").get<double>();
  r.loss = j.at("loss").get<double>();
  r.l_w = j.at("l_w").get<double>();
  r.l_a = j.at("l_a").get<std::vector<double>>();
  r.mean_std = j.at("mean_std").get<std::vector<double>>();
  r.val = ReportFromJson(j.at("val"));
  r.monitored = j.at("monitored").get<double>();
  return r;
}

std::filesystem::path HistoryPath(const std::filesystem::path& dir, std::size_t scale) {
  return dir / ("history_l" + std::to_string(scale) + ".csv");
}

}  // namespace

json RecordToJson(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"phase", r.phase},       {"lr", r.lr},
          {"loss", r.loss},   {"l_w", r.l_w},           {"l_a", r.l_a},
          {"mean_std", r.mean_std}, {"val", ReportToJson(r.val)},
          {"monitored", r.monitored}};
}

std::string EpochsJsonl(const std::vector<EpochRecord>& records) {
  std::string out;
  for (const auto& r : records) out += RecordToJson(r).dump() + "\n";
  return out;
}

std::vector<double> Predict(AttributeModel& model, const Dataset& data, std::size_t batch_size) {
  NoGradGuard no_grad;
  model.SetTraining(false);
  const std::size_t c = data.num_attributes();
  std::vector<double> probs;
  probs.reserve(data.size() * c);
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    positions.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      positions.push_back(i);
    }
    auto batch = MakeBatch(data, positions);
    auto out = model.Forward(batch.images);
    auto p = Sigmoid(out.y_final);
    probs.insert(probs.end(), p.values().begin(), p.values().end());
  }
  return probs;
}

Trainer::Trainer(const TrainConfig& config, const Dataset& train, const Dataset& val)
    : config_(config),
      train_(&train),
      val_(&val),
      model_(ResolveModelConfig(config, train), config.seed),
      optimizer_(config.optimizer, model_.Parameters()),
      scheduler_(config.lr, config.lr_decay_factor, config.lr_floor, config.plateau_patience) {
  ValidateConfig(config);
  if (train.size() == 0 || val.size() == 0) {
    Fail(ErrorCode::kInvalidConfig, "training and validation splits must be non-empty");
  }
  if (val.num_attributes() != train.num_attributes() ||
      val.image_size() != train.image_size()) {
    Fail(ErrorCode::kShapeMismatch, "training and validation data disagree in shape");
  }
  loss_config_.weighted_focal = config.use_weighted_focal;
  loss_config_.focal.gamma = config.focal_gamma;
  loss_config_.class_weights =
      MakeClassWeights(PriorsFrom(train.LabelMatrix(), train.num_attributes()));
  loss_config_.attention.variance_weighting = config.use_attention_loss;
  loss_config_.attention.burn_in_epochs = config.burn_in_epochs;
  loss_config_.attention.granularity = config.std_granularity;
  for (std::size_t i = 0; i < model_.attention_scales().size(); ++i) {
    histories_.emplace_back(config.history_window, train.num_attributes(), config.variance);
  }
}

EpochRecord Trainer::TrainEpoch() {
  const auto started = std::chrono::steady_clock::now();
  const bool attention_phase = config_.use_attention && epoch_ < config_.freeze_epochs;
  model_.SetFrozen("primary", attention_phase);
  model_.SetTraining(true);

  const Dataset& data = *train_;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle = Rng::Derive(config_.seed, kShuffleStream + epoch_);
  shuffle.Shuffle(std::span<std::size_t>(order));
  Rng augment = Rng::Derive(config_.seed, kAugmentStream + epoch_);

  const bool collect = config_.use_attention_loss && epoch_ >= config_.burn_in_epochs;
  const std::size_t c = data.num_attributes();
  const std::size_t levels = histories_.size();
  std::vector<std::map<std::uint64_t, std::vector<double>>> seen(levels);

  EpochRecord record;
  record.epoch = epoch_;
  record.phase = attention_phase ? "attention" : "joint";
  record.lr = scheduler_.lr();
  record.l_a.assign(levels, 0.0);
  record.mean_std.assign(levels, 0.0);

  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    std::span<const std::size_t> positions(order.data() + start, end - start);
    ResetGraph();
    auto batch = MakeBatch(data, positions, config_.augmentation, &augment);
    LossBreakdown loss;
    try {
      auto out = model_.Forward(batch.images);
      loss = TotalLoss(out, batch.labels, batch.ids, histories_, epoch_, loss_config_,
                       !attention_phase);
      if (!std::isfinite(loss.total.item())) Fail(ErrorCode::kNonFinite, "loss");
      Backward(loss.total);
      if (collect) {
        for (std::size_t l = 0; l < levels; ++l) {
          const auto& logits = out.levels[l].logits.values();
          for (std::size_t i = 0; i < batch.ids.size(); ++i) {
            auto& row = seen[l][batch.ids[i]];
            for (std::size_t a = 0; a < c; ++a) row.push_back(StableSigmoid(logits[i * c + a]));
          }
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      Fail(ErrorCode::kNonFiniteLoss, "non-finite value at epoch " + std::to_string(epoch_) +
                                          ", batch " + std::to_string(batch_index) + ": " +
                                          e.what());
    }
    optimizer_.Step(scheduler_.lr());
    optimizer_.ZeroGrad();
    const double weight = static_cast<double>(positions.size());
    record.loss += weight * loss.total.item();
    record.l_w += weight * loss.l_w.item();
    for (std::size_t l = 0; l < levels; ++l) {
      record.l_a[l] += weight * loss.l_a[l].item();
      for (double s : loss.per_sample_std[l]) record.mean_std[l] += s;
    }
    if (on_batch) on_batch(epoch_, batch_index, loss);
  }
  ResetGraph();
  const double n = static_cast<double>(data.size());
  record.loss /= n;
  record.l_w /= n;
  for (std::size_t l = 0; l < levels; ++l) {
    record.l_a[l] /= n;
    record.mean_std[l] /= n;
  }
  if (collect) {
    for (std::size_t l = 0; l < levels; ++l) {
      std::vector<std::uint64_t> ids;
      std::vector<double> probs;
      for (const auto& [id, row] : seen[l]) {
        ids.push_back(id);
        probs.insert(probs.end(), row.begin(), row.end());
      }
      histories_[l].RecordEpoch(epoch_, ids, probs);
    }
  }
  model_.SetFrozen("primary", false);

  const auto probs = Predict(model_, *val_, config_.batch_size);
  const auto labels = val_->LabelMatrix();
  std::vector<std::size_t> evaluable;
  for (std::size_t a = 0; a < c; ++a) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < val_->size(); ++i) pos += labels[i * c + a];
    if (pos > 0 && pos < val_->size()) evaluable.push_back(a);
  }
  record.val = EvaluateSubset(probs, labels, c, Protocol::kPeta, 0.5, evaluable);
  record.monitored = config_.monitor == "f1" ? record.val.example.f1 : record.val.map;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

bool Trainer::RunEpoch() {
  if (finished()) return false;
  auto record = TrainEpoch();
  if (scheduler_.Observe(record.monitored) == PlateauScheduler::Action::kStop) stopped_ = true;
  records_.push_back(std::move(record));
  ++epoch_;
  return !finished();
}

void Trainer::Fit(const std::optional<std::filesystem::path>& checkpoint_dir,
                  std::optional<std::size_t> stop_after) {
  if (checkpoint_dir && epoch_ == 0) SaveCheckpoint(*checkpoint_dir);
  while (!finished() && (!stop_after || epoch_ < *stop_after)) {
    RunEpoch();
    if (checkpoint_dir) SaveCheckpoint(*checkpoint_dir);
  }
}

void Trainer::SaveCheckpoint(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SaveModelState(model_, dir / "params");
  optimizer_.Save(dir);
  for (std::size_t l = 0; l < histories_.size(); ++l) {
    std::ostringstream text;
    histories_[l].Write(text);
    WriteText(HistoryPath(dir, model_.attention_scales()[l]), text.str());
  }
  WriteText(dir / "epochs.jsonl", EpochsJsonl(records_));
  std::string timings = "epoch,wall_seconds\n";
  for (const auto& r : records_) {
    timings += std::to_string(r.epoch) + "," + std::to_string(r.wall_seconds) + "\n";
  }
  WriteText(dir / "timings.csv", timings);
  WriteText(dir / "train_config.json", ConfigToJson(config_).dump(2) + "\n");
  json state = {{"epoch", epoch_},
                {"lr", scheduler_.lr()},
                {"best", scheduler_.best() ? json(*scheduler_.best()) : json(nullptr)},
                {"bad_epochs", scheduler_.bad_epochs()},
                {"stopped", stopped_}};
  WriteText(dir / "trainer_state.json", state.dump(2) + "\n");
}

AttributeModel LoadTrainedModel(const std::filesystem::path& checkpoint, const Dataset& data) {
  const auto config = ConfigFromJson(ReadJsonFile(checkpoint / "train_config.json"));
  AttributeModel model(ResolveModelConfig(config, data), config.seed);
  LoadModelState(model, checkpoint / "params");
  return model;
}

Trainer Trainer::Resume(const std::filesystem::path& dir, const Dataset& train,
                        const Dataset& val) {
  Trainer t(ConfigFromJson(ReadJsonFile(dir / "train_config.json")), train, val);
  LoadModelState(t.model_, dir / "params");
  t.optimizer_.Load(dir);
  for (std::size_t l = 0; l < t.histories_.size(); ++l) {
    const auto path = HistoryPath(dir, t.model_.attention_scales()[l]);
    std::ifstream in(path);
    if (!in) Fail(ErrorCode::kIo, "cannot read " + path.string());
    t.histories_[l].Read(in);
  }
  std::ifstream records(dir / "epochs.jsonl");
  std::string line;
  while (std::getline(records, line)) {
    if (!line.empty()) t.records_.push_back(RecordFromJson(json::parse(line)));
  }
  const auto state = ReadJsonFile(dir / "trainer_state.json");
  t.epoch_ = state.at("epoch").get<std::size_t>();
  std::optional<double> best;
  if (!state.at("best").is_null()) best = state.at("best").get<double>();
  t.scheduler_.Restore(state.at("lr").get<double>(), best,
                       state.at("bad_epochs").get<std::size_t>());
  t.stopped_ = state.at("stopped").get<bool>();
  if (t.records_.size() != t.epoch_) Fail(ErrorCode::kIo, "epochs.jsonl disagrees with trainer state");
  return t;
}

}  // namespace attnagg
