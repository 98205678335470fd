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


// Evaluation metrics for multi-label predictions. Matrices are row-major
// [N x C] with samples as rows.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace attnagg {

// Ranking by descending score, ties by ascending position; AP is the mean
// over positive ranks k of (positives in the top k) / k. NoPositives when no
// label is set.
double AveragePrecision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MeanApResult {
  std::vector<double> ap;
  double map = 0.0;
};

MeanApResult MeanAp(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    std::size_t num_attributes);

// Mean over attributes of (TPR + TNR) / 2 for predictions prob >= threshold.
// DegenerateAttribute when an attribute lacks positives or negatives.
double BalancedMeanAccuracy(std::span<const double> probs, std::span<const std::uint8_t> labels,
                            std::size_t num_attributes, double threshold = 0.5);

struct ExampleMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-sample set overlap averaged over samples. A ratio with an empty
// denominator counts 1 when predicted and true sets are both empty, else 0.
// F1 combines the averaged precision and recall.
ExampleMetrics ExampleBased(std::span<const double> probs, std::span<const std::uint8_t> labels,
                            std::size_t num_attributes, double threshold = 0.5);

enum class Protocol { kMap, kPeta };

struct MetricsReport {
  Protocol protocol = Protocol::kMap;
  std::vector<std::size_t> attributes;  // evaluated attribute indices
  std::vector<double> ap;
  double map = 0.0;
  double ma = 0.0;
  ExampleMetrics example;
  double threshold = 0.5;
};

// Attributes whose positive rate in `labels` is below min_prior are left out
// of every metric.
MetricsReport Evaluate(std::span<const double> probs, std::span<const std::uint8_t> labels,
                       std::size_t num_attributes, Protocol protocol, double threshold = 0.5,
                       double min_prior = 0.0);

// Same, restricted to the listed attribute indices.
MetricsReport EvaluateSubset(std::span<const double> probs, std::span<const std::uint8_t> labels,
                             std::size_t num_attributes, Protocol protocol, double threshold,
                             std::vector<std::size_t> attributes);

// Values rounded to 6 decimals; the PETA protocol adds ma and ex_* keys.
nlohmann::json ReportToJson(const MetricsReport& report);

}  // namespace attnagg
