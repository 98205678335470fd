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


#include "attnagg/losses.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "attnagg/error.hpp"
#include "attnagg/ops.hpp"
#include "attnagg/tensor_io.hpp"

namespace attnagg {

ClassWeights MakeClassWeights(std::span<const double> priors) {
  ClassWeights w;
  for (std::size_t c = 0; c < priors.size(); ++c) {
    const double a = priors[c];
    if (!(a >= 0.0 && a < 1.0)) {
      Fail(ErrorCode::kPriorOutOfRange,
           "prior of attribute " + std::to_string(c) + " is " + FormatDouble(a));
    }
    w.priors.push_back(a);
    w.weights.push_back(std::exp(-a));
  }
  return w;
}

void CheckLabels(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 2 || labels.shape() != logits.shape()) {
    Fail(ErrorCode::kShapeMismatch, "labels " + ShapeToString(labels.shape()) +
                                        " do not match logits " +
                                        ShapeToString(logits.shape()));
  }
  for (double v : labels.values()) {
    if (v != 0.0 && v != 1.0) {
      Fail(ErrorCode::kNonBinaryLabel, "label value " + FormatDouble(v) + " is not 0 or 1");
    }
  }
}

namespace {

Tensor ElementBce(const Tensor& logits, const Tensor& labels) {
  auto pos = Mul(labels, LogSigmoid(logits));
  auto neg = Mul(Sub(Tensor::Scalar(1.0), labels), LogSigmoid(Neg(logits)));
  return Neg(Add(pos, neg));
}

}  // namespace

Tensor SampleBce(const Tensor& logits, const Tensor& labels) {
  CheckLabels(logits, labels);
  return Sum(ElementBce(logits, labels), {1});
}

Tensor Bce(const Tensor& logits, const Tensor& labels) {
  return Mean(SampleBce(logits, labels));
}

Tensor WeightedFocal(const Tensor& logits, const Tensor& labels, const ClassWeights& weights,
                     const FocalConfig& config) {
  CheckLabels(logits, labels);
  if (weights.weights.size() != logits.dim(1)) {
    Fail(ErrorCode::kShapeMismatch, "class weights have " +
                                        std::to_string(weights.weights.size()) +
                                        " entries for " + std::to_string(logits.dim(1)) +
                                        " attributes");
  }
  if (!(config.gamma >= 0.0)) Fail(ErrorCode::kDomainError, "focal gamma must be >= 0");
  auto log_p = LogSigmoid(logits);
  auto log_q = LogSigmoid(Neg(logits));
  // (1 - p)^gamma and p^gamma, formed in log space so they stay finite.
  auto mod_pos = Exp(Mul(log_q, config.gamma));
  auto mod_neg = Exp(Mul(log_p, config.gamma));
  auto pos = Mul(labels, Mul(mod_pos, log_p));
  auto neg = Mul(Sub(Tensor::Scalar(1.0), labels), Mul(mod_neg, log_q));
  auto w = Tensor::From({weights.weights.size()}, weights.weights);
  return Mean(Sum(Neg(Mul(w, Add(pos, neg))), {1}));
}

double HistoryStd(std::span<const double> values, VarianceKind kind) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  // Offsets from the first entry keep a constant window at exactly zero.
  const double origin = values[0];
  double mean = 0.0;
  for (double v : values) mean += v - origin;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - origin - mean) * (v - origin - mean);
  const double var =
      ss / static_cast<double>(kind == VarianceKind::kPopulation ? n : n - 1);
  return std::sqrt(var + var * var / static_cast<double>(n - 1));
}

PredictionHistory::PredictionHistory(std::size_t window, std::size_t num_attributes,
                                     VarianceKind kind)
    : window_(window), num_attributes_(num_attributes), kind_(kind) {
  if (window == 0) Fail(ErrorCode::kInvalidConfig, "history window must be positive");
}

void PredictionHistory::RecordEpoch(std::size_t epoch, std::span<const std::uint64_t> ids,
                                    std::span<const double> probs) {
  for (const auto& e : epochs_) {
    if (e.epoch >= epoch) {
      Fail(ErrorCode::kDuplicateEpoch, "epoch " + std::to_string(epoch) +
                                           " is not newer than recorded epoch " +
                                           std::to_string(e.epoch));
    }
  }
  if (probs.size() != ids.size() * num_attributes_) {
    Fail(ErrorCode::kShapeMismatch, "history record needs " +
                                        std::to_string(ids.size() * num_attributes_) +
                                        " probabilities, got " + std::to_string(probs.size()));
  }
  Epoch entry{epoch, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> row(probs.begin() + i * num_attributes_,
                            probs.begin() + (i + 1) * num_attributes_);
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) {
        Fail(ErrorCode::kDomainError, "history probability " + FormatDouble(p));
      }
    }
    entry.probs[ids[i]] = std::move(row);
  }
  epochs_.push_back(std::move(entry));
  while (epochs_.size() > window_) epochs_.pop_front();
}

std::vector<std::size_t> PredictionHistory::epochs() const {
  std::vector<std::size_t> out;
  for (const auto& e : epochs_) out.push_back(e.epoch);
  return out;
}

std::vector<double> PredictionHistory::Values(std::uint64_t id, std::size_t attr) const {
  std::vector<double> out;
  for (const auto& e : epochs_) {
    auto it = e.probs.find(id);
    if (it != e.probs.end()) out.push_back(it->second.at(attr));
  }
  return out;
}

bool PredictionHistory::Contains(std::uint64_t id) const {
  for (const auto& e : epochs_) {
    if (e.probs.count(id)) return true;
  }
  return false;
}

std::vector<double> PredictionHistory::AttributeStd(std::uint64_t id) const {
  if (!Contains(id)) {
    Fail(ErrorCode::kUnknownSample, "sample " + std::to_string(id) + " has no history");
  }
  std::vector<double> out(num_attributes_);
  for (std::size_t c = 0; c < num_attributes_; ++c) out[c] = HistoryStd(Values(id, c), kind_);
  return out;
}

double PredictionHistory::SampleStd(std::uint64_t id) const {
  const auto per_attr = AttributeStd(id);
  double total = 0.0;
  for (double s : per_attr) total += s;
  return total / static_cast<double>(per_attr.size());
}

void PredictionHistory::Write(std::ostream& out) const {
  out << "epoch,sample_id,attr,prob\n";
  for (const auto& e : epochs_) {
    for (const auto& [id, row] : e.probs) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        out << e.epoch << ',' << id << ',' << c << ',' << FormatDouble(row[c]) << '\n';
      }
    }
  }
}

void PredictionHistory::Read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,sample_id,attr,prob") {
    Fail(ErrorCode::kIo, "history file lacks its header");
  }
  std::deque<Epoch> loaded;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string f[4];
    for (auto& field : f) {
      if (!std::getline(row, field, ',')) Fail(ErrorCode::kIo, "bad history row: " + line);
    }
    const auto epoch = static_cast<std::size_t>(std::stoull(f[0]));
    const auto id = static_cast<std::uint64_t>(std::stoull(f[1]));
    const auto attr = static_cast<std::size_t>(std::stoull(f[2]));
    if (attr >= num_attributes_) Fail(ErrorCode::kIo, "history attribute out of range");
    if (loaded.empty() || loaded.back().epoch != epoch) {
      if (!loaded.empty() && loaded.back().epoch > epoch) {
        Fail(ErrorCode::kIo, "history epochs out of order");
      }
      loaded.push_back({epoch, {}});
    }
    auto& probs = loaded.back().probs[id];
    probs.resize(num_attributes_, 0.0);
    probs[attr] = ParseDouble(f[3]);
  }
  while (loaded.size() > window_) loaded.pop_front();
  epochs_ = std::move(loaded);
}

bool PredictionHistory::operator==(const PredictionHistory& other) const {
  if (window_ != other.window_ || num_attributes_ != other.num_attributes_ ||
      kind_ != other.kind_ || epochs_.size() != other.epochs_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < epochs_.size(); ++i) {
    if (epochs_[i].epoch != other.epochs_[i].epoch ||
        epochs_[i].probs != other.epochs_[i].probs) {
      return false;
    }
  }
  return true;
}

Tensor FactorWeightedBce(const Tensor& logits, const Tensor& labels,
                         std::span<const double> factors) {
  CheckLabels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor f;
  if (factors.size() == n) {
    f = Tensor::From({n, 1}, {factors.begin(), factors.end()});
  } else if (factors.size() == n * c) {
    f = Tensor::From({n, c}, {factors.begin(), factors.end()});
  } else {
    Fail(ErrorCode::kShapeMismatch, "loss factors have " + std::to_string(factors.size()) +
                                        " entries for logits " +
                                        ShapeToString(logits.shape()));
  }
  return Mean(Sum(Mul(f, ElementBce(logits, labels)), {1}));
}

AttentionLossResult AttentionLoss(const Tensor& logits, const Tensor& labels,
                                  std::span<const std::uint64_t> ids,
                                  const PredictionHistory& history, std::size_t epoch,
                                  const AttentionLossConfig& config) {
  CheckLabels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (ids.size() != n) {
    Fail(ErrorCode::kShapeMismatch, "attention loss got " + std::to_string(ids.size()) +
                                        " ids for " + std::to_string(n) + " samples");
  }
  AttentionLossResult result;
  result.per_sample_std.assign(n, 0.0);
  if (!config.variance_weighting || epoch < config.burn_in_epochs) {
    result.loss = Bce(logits, labels);
    return result;
  }
  const bool per_attr = config.granularity == StdGranularity::kPerAttribute;
  std::vector<double> factors(per_attr ? n * c : n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!history.Contains(ids[i])) continue;
    const auto stds = history.AttributeStd(ids[i]);
    double mean = 0.0;
    for (std::size_t a = 0; a < c; ++a) {
      mean += stds[a];
      if (per_attr) factors[i * c + a] = 1.0 + stds[a];
    }
    mean /= static_cast<double>(c);
    result.per_sample_std[i] = mean;
    if (!per_attr) factors[i] = 1.0 + mean;
  }
  result.loss = FactorWeightedBce(logits, labels, factors);
  return result;
}

LossBreakdown TotalLoss(const ModelOutput& out, const Tensor& labels,
                        std::span<const std::uint64_t> ids,
                        const std::vector<PredictionHistory>& histories, std::size_t epoch,
                        const LossConfig& config, bool include_primary) {
  if (histories.size() != out.levels.size()) {
    Fail(ErrorCode::kShapeMismatch, "one prediction history per attention level is required");
  }
  LossBreakdown b;
  b.l_w = config.weighted_focal
              ? WeightedFocal(out.y_p, labels, config.class_weights, config.focal)
              : Bce(out.y_p, labels);
  Tensor total = include_primary ? b.l_w : Tensor();
  for (std::size_t i = 0; i < out.levels.size(); ++i) {
    auto a = AttentionLoss(out.levels[i].logits, labels, ids, histories[i], epoch,
                           config.attention);
    total = total.defined() ? Add(total, a.loss) : a.loss;
    b.l_a.push_back(a.loss);
    b.per_sample_std.push_back(std::move(a.per_sample_std));
  }
  if (!total.defined()) Fail(ErrorCode::kInvalidConfig, "objective has no terms");
  b.total = total;
  return b;
}

}  // namespace attnagg
