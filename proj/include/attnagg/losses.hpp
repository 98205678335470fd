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


// Training objectives: binary cross-entropy, prior-weighted focal loss, the
// prediction-history dispersion weight, and the combined objective.

#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "attnagg/model.hpp"
#include "attnagg/tensor.hpp"

namespace attnagg {

struct ClassWeights {
  std::vector<double> priors;
  std::vector<double> weights;  // exp(-prior)
};

// PriorOutOfRange unless every prior lies in [0, 1). A prior of exactly 0
// (an attribute with no training positives) gets weight 1.
ClassWeights MakeClassWeights(std::span<const double> priors);

struct FocalConfig {
  double gamma = 0.5;
};

// Labels must be a 0/1 tensor shaped like logits ([N x C]).
void CheckLabels(const Tensor& logits, const Tensor& labels);

// Per-sample cross-entropy summed over attributes: [N].
Tensor SampleBce(const Tensor& logits, const Tensor& labels);
// Mean over the batch of SampleBce.
Tensor Bce(const Tensor& logits, const Tensor& labels);
Tensor WeightedFocal(const Tensor& logits, const Tensor& labels, const ClassWeights& weights,
                     const FocalConfig& config);

enum class VarianceKind { kPopulation, kBessel };
enum class StdGranularity { kPerSample, kPerAttribute };

// sqrt(v + v^2 / (n - 1)) for the variance v of `values`; 0 when n < 2.
double HistoryStd(std::span<const double> values, VarianceKind kind);

// Sigmoid outputs of past epochs per (sample, attribute), keeping only the
// most recent `window` recorded epochs.
class PredictionHistory {
 public:
  PredictionHistory(std::size_t window, std::size_t num_attributes,
                    VarianceKind kind = VarianceKind::kPopulation);

  std::size_t window() const { return window_; }
  std::size_t num_attributes() const { return num_attributes_; }
  VarianceKind variance_kind() const { return kind_; }

  // probs is row-major [ids.size() x C]. DuplicateEpoch when the epoch is not
  // newer than every recorded one.
  void RecordEpoch(std::size_t epoch, std::span<const std::uint64_t> ids,
                   std::span<const double> probs);

  std::vector<std::size_t> epochs() const;
  // Stored probabilities of one (sample, attribute), oldest first.
  std::vector<double> Values(std::uint64_t id, std::size_t attr) const;
  bool Contains(std::uint64_t id) const;

  // Per-attribute dispersion, and its mean over attributes. UnknownSample
  // when the id appears in no retained epoch.
  std::vector<double> AttributeStd(std::uint64_t id) const;
  double SampleStd(std::uint64_t id) const;

  // CSV rows `epoch,sample_id,attr,prob` with a header line.
  void Write(std::ostream& out) const;
  void Read(std::istream& in);

  bool operator==(const PredictionHistory& other) const;

 private:
  struct Epoch {
    std::size_t epoch;
    std::map<std::uint64_t, std::vector<double>> probs;
  };

  std::size_t window_;
  std::size_t num_attributes_;
  VarianceKind kind_;
  std::deque<Epoch> epochs_;
};

// Mean over samples of sum_c factor * bce, where factor is [N] (one weight
// per sample) or [N x C]. Factors are constants.
Tensor FactorWeightedBce(const Tensor& logits, const Tensor& labels,
                         std::span<const double> factors);

struct AttentionLossConfig {
  bool variance_weighting = true;
  std::size_t burn_in_epochs = 2;
  StdGranularity granularity = StdGranularity::kPerSample;
};

struct AttentionLossResult {
  Tensor loss;
  // One entry per sample: the dispersion used (mean over attributes in
  // per-attribute mode). All zero while weighting is inactive.
  std::vector<double> per_sample_std;
};

// Plain Bce until epoch >= burn_in_epochs, then the (1 + std) weighted form.
// Ids missing from the history get std 0.
AttentionLossResult AttentionLoss(const Tensor& logits, const Tensor& labels,
                                  std::span<const std::uint64_t> ids,
                                  const PredictionHistory& history, std::size_t epoch,
                                  const AttentionLossConfig& config);

struct LossConfig {
  bool weighted_focal = true;
  FocalConfig focal;
  ClassWeights class_weights;
  AttentionLossConfig attention;
};

struct LossBreakdown {
  Tensor total;
  Tensor l_w;
  std::vector<Tensor> l_a;  // one per model level, ascending scale
  std::vector<std::vector<double>> per_sample_std;
};

// histories[i] belongs to out.levels[i]. With include_primary false the
// total omits l_w (attention-only phase); l_w is still reported.
LossBreakdown TotalLoss(const ModelOutput& out, const Tensor& labels,
                        std::span<const std::uint64_t> ids,
                        const std::vector<PredictionHistory>& histories, std::size_t epoch,
                        const LossConfig& config, bool include_primary = true);

}  // namespace attnagg
